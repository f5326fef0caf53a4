"""
Core attack, transform, loss and metric modules
"""
