"""Test package for incomescm."""
