"""Random walk layer - associated walk, renewal functions and conditioned walks"""
