#!/usr/bin/env python3
"""
Main test runner for the FMSE lab
Provides easy access to the test suite from the project root
"""

import os
import sys

# Add Django project to path
django_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fmse_lab')
if django_path not in sys.path:
    sys.path.insert(0, django_path)
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fmse_lab.settings')

from fmse_lab.tests.test_runner import LabTestRunner


def main():
    """Run the test suite"""

    print("FMSE lab - Test Suite Runner")
    print("=" * 50)

    runner = LabTestRunner()

    if len(sys.argv) > 1:
        if sys.argv[1] == '--help':
            print("\nTest Runner Usage:")
            print("  python run_tests.py                    # Run all tests")
            print("  python run_tests.py operators          # Run operator assembly tests")
            print("  python run_tests.py solver             # Run Dirichlet / DN tests")
            print("  python run_tests.py inverse            # Run recovery tests")
            print("  python run_tests.py walk               # Run random walk tests")
            print("  python run_tests.py fmse               # Run management command tests")
            print("  python run_tests.py --list             # List available tests")
            return True

        if sys.argv[1] == '--list':
            total_tests = 0
            for category, tests in runner.get_test_categories().items():
                if tests:
                    print(f"\n{category} ({len(tests)} files):")
                    for test in sorted(tests):
                        print(f"  • {test}")
                    total_tests += len(tests)
            print(f"\nTotal: {total_tests} test files")
            return True

        pattern = sys.argv[1]
        print(f"Running tests matching: '{pattern}'")
        return runner.run_specific_test(pattern)

    return runner.run_tests()


if __name__ == '__main__':
    try:
        success = main()
        sys.exit(0 if success else 1)
    except KeyboardInterrupt:
        print("\n\nTests interrupted by user")
        sys.exit(1)
