#!/usr/bin/env python3
"""
Test script to verify the setup and dependencies.
Run this script to check if everything is configured correctly.
"""

import sys


def check_imports():
    """Check that all required packages can be imported."""
    print("🔍 Testing imports...")

    try:
        import numpy
        print(f"✅ NumPy: {numpy.__version__}")
    except ImportError as e:
        print(f"❌ NumPy import failed: {e}")
        return False

    try:
        import scipy
        print(f"✅ SciPy: {scipy.__version__}")
    except ImportError as e:
        print(f"❌ SciPy import failed: {e}")
        return False

    try:
        import pydantic
        print(f"✅ Pydantic: {pydantic.VERSION}")
        if int(pydantic.VERSION.split(".")[0]) < 2:
            print("❌ Pydantic 2 or newer is required")
            return False
    except ImportError as e:
        print(f"❌ Pydantic import failed: {e}")
        return False

    try:
        import dotenv  # noqa: F401
        print("✅ python-dotenv available")
    except ImportError as e:
        print(f"❌ python-dotenv import failed: {e}")
        return False

    return True


def check_local_imports():
    """Check that local modules can be imported."""
    print("\n🔍 Testing local module imports...")

    modules = [
        ("core_model", "mixture"),
        ("divergence", "renyi_divergence"),
        ("combiners", "combine"),
        ("fitting", "fit_mixture"),
        ("bounds", "run_suite"),
        ("experiments", "run_gaussian_experiment"),
        ("json_loader", "load_dist"),
        ("config", "load_settings"),
    ]
    for module, name in modules:
        try:
            getattr(__import__(module), name)
            print(f"✅ {module} module imported successfully")
        except (ImportError, AttributeError) as e:
            print(f"❌ {module} import failed: {e}")
            return False

    return True


def check_environment():
    """Check that the RENYI_* environment parses into settings."""
    print("\n🔍 Testing environment variables...")

    from config import load_settings
    from core_model import InputValidationError

    try:
        settings = load_settings()
    except InputValidationError as e:
        print(f"❌ {e}")
        print("Please fix this variable in your .env file")
        return False

    for field, value in settings.model_dump().items():
        print(f"✅ {field}: {value}")
    return True


def test_imports():
    assert check_imports()


def test_local_imports():
    assert check_local_imports()


def test_environment(monkeypatch):
    from config import env_name, load_settings

    monkeypatch.setenv(env_name("seed"), "123")
    monkeypatch.setenv(env_name("log_level"), "debug")
    monkeypatch.setenv(env_name("fit_tol"), "")
    settings = load_settings()
    assert settings.seed == 123
    assert settings.log_level == "DEBUG"
    assert settings.fit_tol == 1e-9
    assert check_environment()


def test_environment_rejects_bad_values(monkeypatch):
    import pytest

    from config import env_name, load_settings
    from core_model import InputValidationError

    monkeypatch.setenv(env_name("robust_eta"), "1.5")
    with pytest.raises(InputValidationError, match="RENYI_ROBUST_ETA"):
        load_settings()
    assert not check_environment()


def main():
    """Run all checks."""
    print("🚀 Rényi Adaptation Toolkit - Setup Test")
    print("=" * 50)

    all_passed = True

    if not check_imports():
        all_passed = False

    if not check_local_imports():
        all_passed = False

    if not check_environment():
        all_passed = False

    print("\n" + "=" * 50)
    if all_passed:
        print("🎉 All checks passed! Your setup is ready.")
        print("\nNext steps:")
        print("1. Run the tests: pytest")
        print("2. Check a bound: python main.py verify --suite thm2 --trials 100")
        print("3. Run the experiment: python main.py experiment gaussian --out results/gaussian.csv")
    else:
        print("❌ Some checks failed. Please fix the issues above.")
        print("\nCommon solutions:")
        print("1. Install missing packages: pip install -r requirements.txt")
        print("2. Copy env.example to .env and fix invalid values")

    return all_passed


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
