"""Calderon-Zygmund decompositions and maximal operators for flow metrics on N x R+."""
