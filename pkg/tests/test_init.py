"""
Tests for package initialization and module structure.
"""

import re

import pytest


class TestPackageStructure:
    """Test the package structure and initialization."""

    def test_package_can_be_imported(self):
        """Test that the ghzshare package can be imported."""
        try:
            import ghzshare
            assert ghzshare is not None
        except ImportError as e:
            pytest.fail(f"Failed to import ghzshare package: {e}")

    def test_package_metadata(self):
        import ghzshare
        assert ghzshare.__version__ == "0.1.0"
        assert re.match(r'^\d+\.\d+\.\d+(-[a-zA-Z0-9.-]+)?$', ghzshare.__version__)
        assert isinstance(ghzshare.__author__, str) and ghzshare.__author__
        assert "secret sharing" in ghzshare.__description__

    def test_core_modules_exported(self):
        import ghzshare
        for name in ('correlations', 'source', 'devices', 'protocol', 'analysis'):
            assert name in ghzshare.__all__
            assert hasattr(ghzshare, name)

    def test_package_has_docstring(self):
        import ghzshare
        assert ghzshare.__doc__
        assert "pseudo-GHZ" in ghzshare.__doc__


class TestEntryPoints:
    """Test that the console entry points resolve."""

    def test_cli_main(self):
        from ghzshare.cli import main
        assert callable(main)

    def test_server_main(self):
        from ghzshare.api import create_app, main
        assert callable(create_app)
        assert callable(main)
