"""diarkit: speaker diarization and dominance analysis for multi-stream
small-group recordings.

Pipeline: multi-channel MFCC extraction -> per-channel mean/variance
normalization -> stream concatenation -> temporal splicing -> denoising
autoencoder bottleneck features -> minimum-duration HMM diarization with
threshold-free iterative merging -> per-speaker dominance scores built from
turn counts, speaking time, and wavelet-packet speech energy.
"""

__version__ = "0.1.0"
