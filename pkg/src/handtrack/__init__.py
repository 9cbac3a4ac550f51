"""Articulated pose tracking of skinned meshes from depth frames.

Minimizes a seven-term nonlinear least-squares objective (closest-point and
silhouette-ray data terms, collision repulsion, detection-driven salient
correspondences, grasp-stability contacts, joint-limit and temporal
regularizers) by alternating correspondence search with damped Gauss-Newton.
"""

__version__ = "0.1.0"
