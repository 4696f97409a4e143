"""Multi-agent learners: FACMAC actor-critic and independent tabular Q-learning."""
