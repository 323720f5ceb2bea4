"""sdfest: stochastic discount factor estimation for panels of excess returns.

Estimators follow the scikit-learn convention: hyperparameters in
``__init__``, ``fit`` returns ``self``, fitted state in trailing-underscore
attributes, ``get_params``/``set_params`` available on every estimator.
"""

__version__ = "0.1.0"
