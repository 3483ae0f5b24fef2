"""Unsupervised ultrasound artifact removal with an optimal-transport cycleGAN.

Subpackages: ``autodiff`` (tape and primitives), ``nn`` (U-Net generator,
PatchGAN discriminator, SSIM, checkpoints), ``train`` (losses, Adam, training
loops), ``sim`` (phantoms, RF simulation, beamforming, degradations), ``ot``
(exact discrete optimal transport), plus ``metrics`` and the ``cli``.
"""

__version__ = "0.1.0"
