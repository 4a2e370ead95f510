"""Tests for gtd-lab."""
