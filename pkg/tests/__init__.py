"""Tests for cavity-subfields."""
