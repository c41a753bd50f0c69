#!/usr/bin/env python3
"""
Test script to verify environment configuration.
Run this before starting experiments to verify everything is set up correctly.
"""

import os
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from dotenv import load_dotenv

# Load .env if it exists
load_dotenv()


def print_header(text):
    """Print a formatted header."""
    print(f"\n{'='*60}")
    print(f"  {text}")
    print(f"{'='*60}")


def print_success(text):
    """Print success message."""
    print(f"✅ {text}")


def print_warning(text):
    """Print warning message."""
    print(f"⚠️  {text}")


def print_error(text):
    """Print error message."""
    print(f"❌ {text}")


def test_imports():
    """Test if required packages are installed."""
    print_header("Testing Python Imports")

    imports = [
        ("fastapi", "FastAPI"),
        ("uvicorn", "Uvicorn"),
        ("pandas", "Pandas"),
        ("numpy", "NumPy"),
        ("dotenv", "python-dotenv"),
        ("pydantic", "Pydantic"),
        ("pydantic_settings", "Pydantic Settings"),
        ("yaml", "PyYAML"),
        ("pytest", "pytest"),
        ("hypothesis", "Hypothesis"),
    ]

    all_ok = True
    for module_name, display_name in imports:
        try:
            __import__(module_name)
            print_success(f"{display_name} ({module_name})")
        except ImportError:
            print_error(f"{display_name} ({module_name}) - NOT INSTALLED")
            all_ok = False

    if not all_ok:
        print("\n⚠️  Install missing packages:")
        print("   pip install -r requirements.txt")

    return all_ok


def test_budget_settings():
    """Test decision budget and worker settings."""
    print_header("Testing Decision Budget Settings")

    budget = os.getenv("DECISION_BUDGET_S", "180").strip()
    workers = os.getenv("EVAL_WORKERS", "1").strip()
    try:
        budget_value = float(budget)
        workers_value = int(workers)
    except ValueError:
        print_error(f"DECISION_BUDGET_S={budget!r} / EVAL_WORKERS={workers!r} are not numbers")
        return False

    if budget_value <= 0:
        print_error("DECISION_BUDGET_S must be positive")
        return False
    if workers_value < 1:
        print_error("EVAL_WORKERS must be at least 1")
        return False
    if budget_value > 180:
        print_warning(f"DECISION_BUDGET_S={budget_value} exceeds the 3-minute epoch budget")
    print_success(f"Decision budget {budget_value} s with {workers_value} evaluation worker(s)")
    return True


def test_data_files():
    """Test the bundled profile, trace and environment files."""
    print_header("Testing Data Files")

    try:
        from services.power_service import load_environment
        from services.workload_service import load_function_profiles, load_trace

        profiles = load_function_profiles("data/profiles.csv")
        print_success(f"data/profiles.csv: {len(profiles)} function profiles")
        schedule = load_trace("data/trace.csv", profiles)
        print_success(f"data/trace.csv: {schedule.horizon} epochs")
        load_environment("data/environment.csv")
        print_success("data/environment.csv: 24 hourly rows")
        return True
    except Exception as e:
        print_error(f"Data files failed to load: {e}")
        return False


def test_api_configuration():
    """Test API configuration."""
    print_header("Testing API Configuration")

    api_host = os.getenv("API_HOST", "0.0.0.0")
    api_port = os.getenv("API_PORT", "8000")
    api_reload = os.getenv("API_RELOAD", "false")

    print(f"API_HOST: {api_host}")
    print(f"API_PORT: {api_port}")
    print(f"API_RELOAD: {api_reload}")

    try:
        port = int(api_port)
        if 1 <= port <= 65535:
            print_success(f"API_PORT is valid: {port}")
            return True
        else:
            print_error(f"API_PORT out of range: {port}")
            return False
    except ValueError:
        print_error(f"API_PORT is not a valid number: {api_port}")
        return False


def test_config_module():
    """Test if config module works."""
    print_header("Testing Config Module")

    try:
        from config import parse_config, settings
        print_success("config.py loaded successfully")

        try:
            config = parse_config(settings.default_config_path)
            print_success(
                f"{settings.default_config_path}: policy {config.policy.value}, "
                f"{config.nodes} nodes, Cstr {config.cstr}"
            )
            return True
        except ValueError as e:
            print_error(f"Cannot parse default experiment config: {e}")
            return False
    except Exception as e:
        print_error(f"Error loading config.py: {e}")
        return False


def main():
    """Run all tests."""
    print("\n" + "="*60)
    print("  Carbon-Aware FaaS Scheduler - Setup Verification")
    print("="*60)

    results = {
        "Python Imports": test_imports(),
        "Decision Budget": test_budget_settings(),
        "Data Files": test_data_files(),
        "API Configuration": test_api_configuration(),
        "Config Module": test_config_module(),
    }

    # Summary
    print_header("Test Summary")

    passed = sum(1 for v in results.values() if v)
    total = len(results)

    for test_name, result in results.items():
        status = "✅ PASS" if result else "❌ FAIL"
        print(f"{status} - {test_name}")

    print(f"\n{passed}/{total} tests passed")

    if passed == total:
        print_success("\n🎉 All tests passed! Your setup is ready.")
        print("\nYou can now run an experiment:")
        print("  python cli.py run --config data/experiment.yaml")
        print("\nOr start the API:")
        print("  ./start.sh")
        return 0
    else:
        print_warning(f"\n⚠️  {total - passed} test(s) failed. See details above.")
        print("\nNext steps:")
        print("1. Review the errors above")
        print("2. pip install -r requirements.txt")
        print("3. Run this test again to verify fixes")
        return 1


if __name__ == "__main__":
    sys.exit(main())
