"""Unit test package for ismdp."""
