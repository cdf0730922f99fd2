#!/usr/bin/env python3
"""
Test runner for the sa-net project.
This script runs the pytest suite with proper path configuration.

Usage:
    python run_tests.py              # all tests except slow ones
    python run_tests.py eigensolver  # tests/test_eigensolver.py only
    python run_tests.py --all        # include slow MNIST runs
"""
import sys
import os

import pytest

# Add src directory to Python path
project_root = os.path.dirname(os.path.abspath(__file__))
src_path = os.path.join(project_root, 'src')
tests_path = os.path.join(project_root, 'tests')

sys.path.insert(0, src_path)


def run_all_tests(include_slow=False):
    """Run every test module in the tests directory."""
    args = [tests_path]
    if not include_slow:
        args += ['-m', 'not slow']
    return int(pytest.main(args))


def run_specific_test(test_module):
    """Run tests from a specific module."""
    path = os.path.join(tests_path, f'test_{test_module}.py')
    if not os.path.exists(path):
        print(f"Error: no test module 'test_{test_module}'")
        return 1
    return int(pytest.main([path]))


if __name__ == '__main__':
    print("SA-Net Test Runner")
    print("=" * 50)
    print(f"Project Root: {project_root}")
    print(f"Source Path: {src_path}")
    print(f"Tests Path: {tests_path}")
    print("=" * 50)

    if len(sys.argv) > 1 and sys.argv[1] != '--all':
        test_module = sys.argv[1]
        print(f"Running tests for module: {test_module}")
        exit_code = run_specific_test(test_module)
    else:
        print("Running all tests...")
        exit_code = run_all_tests(include_slow='--all' in sys.argv[1:])

    sys.exit(exit_code)
