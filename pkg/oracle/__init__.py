"""Oracle layer - exact small-instance enumeration"""
