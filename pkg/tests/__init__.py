"""Tests for faircox."""
