"""Day-ahead energy trading: a 24-hour market MDP, a PPO dispatch agent with
curriculum training, and a simulated round-based settlement ledger."""

__version__ = "0.1.0"
