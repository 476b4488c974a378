"""
Oracles, estimators and algorithms of the submodular adaptivity toolkit
"""
