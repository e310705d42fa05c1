"""
Numeric core of the HFO detector (no Django imports)
"""
