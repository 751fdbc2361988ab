"""Drone RF classification from complex IQ spectrograms.

Modules: ``sigcore`` (frames, bursts, normalisation, SNR mixing), ``synth``
(transmitter and noise models), ``spectro`` (spectrograms), ``dataset``
(generation, storage, k-fold splits), ``nn`` (numpy VGG-BN, Adam, training),
``metrics``/``tsne``/``reports`` (evaluation), ``stream`` (real-time
simulation) and ``cli``.
"""

__version__ = "0.1.0"
