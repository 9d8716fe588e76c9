"""Tests for dreammap module."""
