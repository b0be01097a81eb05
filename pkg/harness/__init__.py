"""Harness layer - limit theorem tables and verdicts"""
