"""cqlab: a colour-quantisation laboratory.

Learned two-branch palette quantisation, classical palette baselines
(median cut, octree, error-diffusion dithering), colour-naming stimulus
grid tooling, and a two-stage colour-term evolution protocol.
"""

__version__ = "0.1.0"
