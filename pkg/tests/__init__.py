"""Tests for rledit."""
