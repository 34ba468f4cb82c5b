"""Dynamic multinomial logit with correlated random effects for labor-informality panels."""

__version__ = "0.3.0"
