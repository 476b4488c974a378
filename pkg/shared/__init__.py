"""
Shared modules for the submodular adaptivity toolkit
"""
