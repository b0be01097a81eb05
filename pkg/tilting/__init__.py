"""Tilting layer - weakly subcritical change of measure"""
