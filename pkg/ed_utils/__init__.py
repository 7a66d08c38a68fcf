# Test decorators and the JSON runner used by run_tests.py.
