int lens_placeholder_test_stages;
