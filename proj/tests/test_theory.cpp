int lens_placeholder_test_theory;
