"""
Tests module for critmet.

Unit tests for the sensing modules, configuration, storage and CLI.
"""
