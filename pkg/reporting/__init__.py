"""Reporting layer - run configuration, manifests and output"""
