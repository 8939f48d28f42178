"""
morphshell Test Suite

This package contains tests for the morphshell simulator and its HTTP API.
Run tests with: pytest
"""
