package org.wikidata.wdtk.rdf;

/**
 * A plain string data value.
 */
public class StringValue {

    private final String string;

    public StringValue(String string) {
        this.string = string;
    }

    /**
     * The wrapped string.
     */
    public String getString() {
        return string;
    }
}
