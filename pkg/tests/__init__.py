"""Tests package for the DP-IADMM toolkit."""
