"""Text formatting helpers for CLI output"""
