"""Short tour: symbol decay, one frame check and one model-form evaluation."""
from lgc_lab import experiments as X

out = X.run_serial("symbol-decay", {"j3s": list(range(6, 15))})
print(f"stationary-phase slope over j3 = 6..14: {out.fitted_exponent:.4f}")

row = X.frame_point(256, 0)
print(f"frame at lambda=256: bessel ratio {row['bessel_ratio']:.3f}, parseval error {row['parseval_error']:.2e}")

fast, brute = X.modelform_oracle(64)
print(f"model form at lambda=64: fast {fast:.6e}, brute force {brute:.6e}")
