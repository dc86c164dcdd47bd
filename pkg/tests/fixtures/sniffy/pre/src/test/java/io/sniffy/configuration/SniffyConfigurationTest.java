package io.sniffy.configuration;

import org.junit.After;
import org.junit.Before;
import org.junit.Test;

import static org.junit.Assert.assertFalse;
import static org.junit.Assert.assertTrue;

public class SniffyConfigurationTest {

    private SniffyConfiguration sniffyConfiguration;

    private final String monitorJdbcProperty = "io.sniffy.monitorJdbc";

    @Before
    public void setUp() {
        sniffyConfiguration = new SniffyConfiguration();
    }

    @After
    public void clearProperties() {
        System.getProperties().remove("io.sniffy.injectHtml");
        System.getProperties().remove("io.sniffy.injectHtmlExcludePattern");
        System.getProperties().remove(monitorJdbcProperty);
    }

    private void setProperty(String name, String value) {
        System.setProperty(name, value);
    }

    @Test
    public void testMonitorJdbc() {
        sniffyConfiguration.loadSniffyConfiguration();
        assertTrue(sniffyConfiguration.isMonitorJdbc());
    }

    @Test
    public void testInjectHtml() {
        // default value
        sniffyConfiguration.loadSniffyConfiguration();
        assertFalse(sniffyConfiguration.isInjectHtml());
        // system property
        setProperty("io.sniffy.injectHtml", "true");
        sniffyConfiguration.loadSniffyConfiguration();
        assertTrue(sniffyConfiguration.isInjectHtml());
        // overridden value
        System.getProperties().remove("io.sniffy.injectHtml");
        sniffyConfiguration.loadSniffyConfiguration();
        sniffyConfiguration.setInjectHtml(false);
        assertFalse(sniffyConfiguration.isInjectHtml());
    }
}
