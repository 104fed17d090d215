"""sentibot: a desk-scale chatbot framework with scalable response sentiment.

Trains an attention seq2seq baseline and steers its replies four ways --
persona-style score conditioning, policy-gradient fine-tuning, latent-space
gradient ascent through a VRAE, and embedding-level style transfer -- then
evaluates everything with four machine metrics plus a human-annotation export.
"""

__version__ = "0.1.0"
