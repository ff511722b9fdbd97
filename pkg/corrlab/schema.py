# schema.py
# CSV column layouts per experiment kind and the run-manifest template.

CSV_COLUMNS = {
    "scatter": (
        "N", "a_asymptotic", "a_integral", "omega0", "sup_omega", "margin",
        "b", "eight_pi_a", "excess", "config_hash",
    ),
    "window": ("Lambda", "L", "T", "F", "F1", "F2", "grid_dr", "dt", "potential_hash", "config_hash"),
    "window-sweep": ("Lambda", "L", "T", "F", "F1", "F2", "grid_dr", "dt", "potential_hash", "config_hash"),
    "dispersive": ("t", "sup_norm", "grad_sup_norm", "Lambda", "family_tag", "config_hash"),
    "energy": (
        "N", "ell", "N_ell", "e1_per_N", "e1_limit", "h2_leading_per_N3", "h2_limit",
        "fn0_value", "fn0_scaled", "fn0_asymptotic", "config_hash",
    ),
    "gp": ("t", "mass", "energy", "divergence", "config_hash"),
    "micro-macro": ("N", "ell", "t", "Lambda", "L", "T", "config_hash"),
}

MANIFEST_TEMPLATE = {
    "config_hash": "",
    "code_version": "",
    "kind": "",
    "config": {},
    "started": "",
    "finished": None,
    "status": "RUNNING",
    "points": {},
    "diagnostics": {},
    "verdicts": {},
    "failures": [],
    "csv_path": None,
}
