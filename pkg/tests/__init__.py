"""Test package for trace_oracle."""
