int lens_placeholder_test_rng;
