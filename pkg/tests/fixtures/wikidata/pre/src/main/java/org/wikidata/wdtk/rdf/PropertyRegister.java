package org.wikidata.wdtk.rdf;

import java.util.HashMap;
import java.util.Map;

/**
 * Keeps track of the datatypes and URI patterns of Wikidata properties.
 */
public class PropertyRegister {

    /**
     * Datatype IRI of string-valued properties.
     */
    public static final String DT_STRING = "http://www.wikidata.org/ontology#propertyTypeString";

    private final Map<String, String> datatypes = new HashMap<>();
    private final Map<String, String> uriPatterns = new HashMap<>();

    /**
     * Records the datatype of a property whose value is a string and returns it.
     */
    public String setPropertyTypeFromStringValue(PropertyIdValue propertyIdValue, StringValue value) {
        uriPatterns.put(propertyIdValue.getId(), value.getString());
        datatypes.put(propertyIdValue.getId(), DT_STRING);
        return DT_STRING;
    }

    /**
     * Datatype IRI recorded for the property, or null when unknown.
     */
    public String getPropertyType(PropertyIdValue propertyIdValue) {
        return datatypes.get(propertyIdValue.getId());
    }
}
