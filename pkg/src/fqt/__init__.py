"""Federated training of classical networks with circuit-generated weights.

The package simulates a hybrid scheme: a small parameterized quantum
circuit plus a mapping network generate the full weight vector of a
classical target model, and only the generator parameters are trained,
locally on federated clients and averaged at a central node. Inference
needs nothing but the exported classical weights.
"""

__version__ = "0.1.0"
