"""
igsense - Ganho de informação e sensibilidade a parâmetros auxiliares

Problemas inversos lineares-gaussianos restritos por EDP: divergência KL
posterior/prior, seu gradiente em relação a parâmetros auxiliares via
adjuntos e limitantes globais do tipo DGSM.
"""

__version__ = "1.0.0"
