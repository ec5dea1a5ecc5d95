"""Digit-prompted speaker and content verification toolkit.

Frame alignments from whole-word HMMs or a neural frame classifier feed
GMM-MAP and i-vector speaker backends; the KL divergence between the two
alignments verifies that the prompted digit string was actually spoken.
"""

__version__ = "0.1.0"
