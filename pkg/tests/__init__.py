"""Tests for the askgrid package."""
