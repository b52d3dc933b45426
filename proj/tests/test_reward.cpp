int lens_placeholder_test_reward;
