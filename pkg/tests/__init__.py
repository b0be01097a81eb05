"""Tests for the weakly subcritical BPRE simulator"""
