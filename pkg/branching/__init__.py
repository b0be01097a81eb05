"""Branching layer - quenched calculus, population simulation and survival estimators"""
