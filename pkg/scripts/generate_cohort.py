#!/usr/bin/env python3
"""Generate the bundled 139-patient cohort CSV.

The file ships with the package so the experiments run offline.  Group
sizes, binary counts, and per-group means/sds of the numeric features
match the published summary statistics of the source cohort exactly
(the real data live behind the URL documented in the README).

Joint structure within the groups is synthetic but clinically shaped:
survivors share a common "healthy" factor, while the deceased group
mixes three profiles (elderly; low-output with a prolonged pre-ejection
to ejection-time ratio; vascular/metabolic with low BMI and a calcified
high-ABI mode).  Age is skewed in opposite directions in the two groups
(young deaths and old survivors are the exceptions), ABI and BMI carry
two-sided risk, and the pre-ejection signal is only readable against
ejection time.

Usage: python3 scripts/generate_cohort.py [outfile]
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

N_DIED = 87
N_SURV = 52

# (died mean, died sd, survived mean, survived sd) with sample (n-1) sds
MOMENTS = {
    "age": (69.0, 12.0, 55.3, 11.5),
    "bPEP": (96.6, 21.0, 94.8, 18.8),
    "bET": (250.0, 34.9, 262.4, 24.1),
    "ABI": (0.94, 0.20, 1.04, 0.10),
    "BMI": (23.6, 3.9, 25.7, 3.1),
}

# (died count, survived count)
BINARY_COUNTS = {
    "sex": (60, 43),
    "diabetes": (21, 13),
    "hypertension": (45, 15),
    "dyslipidemia": (30, 14),
    "PCI": (33, 17),
    "STEMI": (18, 12),
}

DECIMALS = {"age": 1, "bPEP": 2, "bET": 2, "ABI": 3, "BMI": 2}

PARAMS = {
    # deceased-group mixture weights: elderly / low-output / vascular-metabolic
    "weights": (0.38, 0.38, 0.24),
    # per-feature subtype means in latent z units
    "age_mu": (0.25, 0.0, 0.10),
    "bet_mu": (-0.10, -0.55, 0.35),
    "abi_mu": (-0.05, 0.45, 0.55),
    "bmi_mu": (-0.05, 0.40, -0.50),
    "ratio_mu": (0.55, 3.20, 0.45),
    "noise": 0.78,
    "ratio_noise": 0.55,
    "severity_sd": 0.45,
    # detached low-ABI tail within the elderly profile
    "pad_frac": 0.18,
    "pad_shift": -1.6,
    # fraction of deaths indistinguishable from survivors (sudden death
    # in low-risk patients); the irreducible part of the problem
    "hidden_frac": 0.15,
    # age clusters: survivor bulk has a sharp old edge plus robust elders
    # far above it; the deceased bulk is elderly, with young deaths hidden
    # inside the survivor age range
    "old_survivor_frac": 0.115,
    "old_survivor_mu": 2.05,
    "old_survivor_sd": 0.40,
    "surv_age_skew": 2.2,
    "surv_age_scale": 0.45,
    "surv_age_mu": -0.26,
    "young_death_frac": 0.14,
    "young_death_mu": -0.40,
    "young_death_sd": 0.40,
    "died_age_skew": 2.5,
    "died_age_scale": 0.42,
    "died_age_bulk_mu": 0.85,
    # survivor healthy-factor loadings
    "q_bet": 0.50, "q_abi": 0.60, "q_bmi": 0.40, "q_ratio": -0.35,
    # composition of the pre-ejection latent: the ratio signal is expressed
    # against ejection time (shorter ejection amplifies it), so the pair
    # carries it as a quotient rather than a linear combination
    "bpep_ratio_load": 0.90,
    "bpep_bet_gain": 0.45,
    "bpep_bet_load": 0.55,
    "bpep_noise": 0.18,
    "surv_ratio_noise": 1.20,
    # binary couplings to latent severity (0 = independent placement)
    "hypertension_age_coupling": 0.4,
    # class-blind measurement artifacts on the non-age numerics
    "artifact_frac": {"bet": 0.04, "abi": 0.04, "bmi": 0.04, "bpep": 0.04},
    "artifact_lo": 2.2,
    "artifact_hi": 3.2,
}

RAW_HEADERS = {
    "age": "age_years",
    "sex": "male",
    "diabetes": "diabetes",
    "hypertension": "hypertension",
    "dyslipidemia": "dyslipidemia",
    "PCI": "pci",
    "STEMI": "stemi",
    "bPEP": "bpep_ms",
    "bET": "bet_ms",
    "ABI": "abi",
    "BMI": "bmi",
}
OUTCOME_HEADER = "death_14y"
COLUMN_ORDER = ("age", "sex", "diabetes", "hypertension", "dyslipidemia",
                "PCI", "STEMI", "bPEP", "bET", "ABI", "BMI")


def match_moments(values: np.ndarray, mean: float, sd: float) -> np.ndarray:
    z = (values - values.mean()) / values.std(ddof=1)
    return mean + sd * z


def match_moments_with_fixed(core: np.ndarray, fixed: np.ndarray,
                             mean: float, sd: float) -> np.ndarray:
    """Scale/shift `core` so that concatenated with the untouchable `fixed`
    values the whole group hits the target sample mean and sd exactly."""
    n = core.size + fixed.size
    core_mean = (n * mean - fixed.sum()) / core.size
    ss_total = (n - 1) * sd * sd
    ss_fixed = float(np.sum((fixed - mean) ** 2))
    ss_core_about_own = ss_total - ss_fixed - core.size * (core_mean - mean) ** 2
    if ss_core_about_own <= 0:
        raise ValueError("fixed values leave no spread budget for the core group")
    z = core - core.mean()
    scale = np.sqrt(ss_core_about_own / float(np.sum(z * z)))
    return core_mean + scale * z


def standardized_gamma(rng, shape: float, size: int) -> np.ndarray:
    g = rng.gamma(shape, 1.0, size)
    return (g - shape) / np.sqrt(shape)


def pick_weighted(rng, scores: np.ndarray, count: int) -> np.ndarray:
    """Indices of `count` members sampled without replacement, higher
    scores more likely (Gumbel top-k)."""
    keys = scores + rng.gumbel(size=scores.size)
    return np.argsort(-keys)[:count]


def generate(seed: int = 20240811, params: dict | None = None,
             return_groups: bool = False):
    p = dict(PARAMS)
    if params:
        p.update(params)
    rng = np.random.default_rng(seed)

    def survivor_like(m, old_frac):
        """Feature draws from the healthy profile: a common factor plus a
        left-skewed age bulk with a sharp upper edge and optional robust
        elders far above it.  Elders carry uniformly mid-healthy markers,
        so recognizing them takes age AND a marker together."""
        q = rng.normal(0.0, 1.0, m)
        n_old = int(round(old_frac * m))
        age = (p["surv_age_mu"] - p["surv_age_scale"]
               * standardized_gamma(rng, p["surv_age_skew"], m))
        feats = {
            "age": age,
            "bet": p["q_bet"] * q + rng.normal(0.0, 0.8, m),
            "abi": p["q_abi"] * q + rng.normal(0.0, 0.6, m),
            "bmi": p["q_bmi"] * q + rng.normal(0.0, 0.9, m),
            "ratio": p["q_ratio"] * q + rng.normal(0.0, p["surv_ratio_noise"], m),
        }
        if n_old:
            old = rng.choice(m, size=n_old, replace=False)
            feats["age"][old] = rng.normal(p["old_survivor_mu"],
                                           p["old_survivor_sd"], n_old)
            for name, mid, sd in (("bet", 0.35, 0.35), ("abi", 0.30, 0.30),
                                  ("bmi", 0.20, 0.35), ("ratio", -0.20, 0.40)):
                feats[name][old] = rng.normal(mid, sd, n_old)
        return feats

    z_surv = survivor_like(N_SURV, p["old_survivor_frac"])

    # deceased: a hidden low-risk slice drawn from the healthy profile,
    # the rest from three clinical profiles with an elderly age bulk
    # (sharp upper edge) and a young-death tail
    n_hidden = int(round(p["hidden_frac"] * N_DIED))
    n_core = N_DIED - n_hidden
    hidden = survivor_like(n_hidden, 0.0)

    subtype = rng.choice(3, size=n_core, p=p["weights"])
    # young deaths are low-output (subtype B) patients: unremarkable on age
    # and the vascular measures, flagged only by the systolic time intervals
    n_young = min(int(round(p["young_death_frac"] * n_core)),
                  int(np.sum(subtype == 1)))
    young = np.zeros(n_core, dtype=bool)
    b_members = np.flatnonzero(subtype == 1)
    young[rng.choice(b_members, size=n_young, replace=False)] = True
    core_age = (p["died_age_bulk_mu"] - p["died_age_scale"]
                * standardized_gamma(rng, p["died_age_skew"], n_core))
    core_age = core_age + np.array(p["age_mu"])[subtype]
    core_age[young] = rng.normal(p["young_death_mu"], p["young_death_sd"], n_young)
    # a per-patient severity factor scales the vascular/metabolic markers
    # together, so they are redundant rather than independent evidence
    severity = np.maximum(rng.normal(1.0, p["severity_sd"], n_core), 0.2)
    core = {"age": core_age}
    for name in ("bet", "abi", "bmi", "ratio"):
        mu = np.array(p[name + "_mu"])[subtype]
        scale = severity if name in ("abi", "bmi") else 1.0
        noise = p["ratio_noise"] if name == "ratio" else p["noise"]
        core[name] = mu * scale + rng.normal(0.0, noise, n_core)

    # a peripheral-artery subset of the elderly profile carries most of the
    # deceased group's ABI spread as a detached low tail
    a_members = np.flatnonzero(subtype == 0)
    n_pad = int(round(p["pad_frac"] * a_members.size))
    pad = rng.choice(a_members, size=n_pad, replace=False)
    core["abi"][pad] += p["pad_shift"]

    def bpep_latent(z, size):
        expression = 1.0 - p["bpep_bet_gain"] * z["bet"]
        return (p["bpep_ratio_load"] * z["ratio"] * expression
                + p["bpep_bet_load"] * z["bet"]
                + rng.normal(0.0, p["bpep_noise"], size))

    latent_key = {"age": "age", "bET": "bet", "ABI": "abi", "BMI": "bmi"}
    core["bpep"] = bpep_latent(core, n_core)
    hidden["bpep"] = bpep_latent(hidden, n_hidden)
    z_surv["bpep"] = bpep_latent(z_surv, N_SURV)
    latent_key["bPEP"] = "bpep"

    # class-blind measurement artifacts: a few patients per channel carry
    # extreme values in either direction regardless of outcome
    for feats in (core, hidden, z_surv):
        m = len(feats["age"])
        for key in ("bet", "abi", "bmi", "bpep"):
            n_art = int(round(p["artifact_frac"][key] * m))
            if n_art == 0:
                continue
            who = rng.choice(m, size=n_art, replace=False)
            size = rng.uniform(p["artifact_lo"], p["artifact_hi"], n_art)
            sign = rng.choice((-1.0, 1.0), size=n_art)
            feats[key][who] += sign * size

    # survivors get their own affine; hidden deaths ride the SAME affine so
    # they are exactly survivor-distributed in raw units, and the core
    # absorbs whatever shift/scale keeps the whole group's moments on target
    hidden_order = rng.permutation(N_DIED)
    numeric = {}
    for name, (m1, s1, m0, s0) in MOMENTS.items():
        key = latent_key[name]
        sl = z_surv[key]
        surv_raw = m0 + s0 * (sl - sl.mean()) / sl.std(ddof=1)
        hidden_raw = m0 + s0 * (hidden[key] - sl.mean()) / sl.std(ddof=1)
        core_raw = match_moments_with_fixed(core[key], hidden_raw, m1, s1)
        died_raw = np.concatenate([core_raw, hidden_raw])[hidden_order]
        numeric[name] = (
            np.round(died_raw, DECIMALS[name]),
            np.round(surv_raw, DECIMALS[name]),
        )

    died_age_z = np.concatenate([core["age"], hidden["age"]])[hidden_order]
    binary = {}
    for name, (c1, c0) in BINARY_COUNTS.items():
        died_flags = np.zeros(N_DIED, dtype=int)
        surv_flags = np.zeros(N_SURV, dtype=int)
        if name == "hypertension":
            cpl = p["hypertension_age_coupling"]
            died_on = pick_weighted(rng, cpl * died_age_z, c1)
            surv_on = pick_weighted(rng, cpl * z_surv["age"], c0)
        else:
            died_on = rng.choice(N_DIED, size=c1, replace=False)
            surv_on = rng.choice(N_SURV, size=c0, replace=False)
        died_flags[died_on] = 1
        surv_flags[surv_on] = 1
        binary[name] = (died_flags, surv_flags)

    # interleave outcome groups in a shuffled patient order
    order = rng.permutation(N_DIED + N_SURV)
    outcome = np.concatenate([np.ones(N_DIED, dtype=int),
                              np.zeros(N_SURV, dtype=int)])[order]

    core_groups = np.array(["A", "B", "C"], dtype=object)[subtype]
    core_groups[young] = "B_young"
    died_groups = np.concatenate([core_groups,
                                  np.repeat("hidden", n_hidden)])[hidden_order]
    groups = np.concatenate([died_groups, np.repeat("surv", N_SURV)])[order]

    columns = {}
    for name in MOMENTS:
        columns[name] = np.concatenate(numeric[name])[order]
    for name in BINARY_COUNTS:
        columns[name] = np.concatenate(binary[name])[order]

    header = [RAW_HEADERS[n] for n in COLUMN_ORDER] + [OUTCOME_HEADER]
    rows = []
    for i in range(N_DIED + N_SURV):
        row = []
        for name in COLUMN_ORDER:
            v = columns[name][i]
            if name in MOMENTS:
                row.append(f"{v:.{DECIMALS[name]}f}")
            else:
                row.append(str(int(v)))
        row.append(str(int(outcome[i])))
        rows.append(row)
    if return_groups:
        return rows, header, groups
    return rows, header


def verify(rows, header):
    """Recompute every published statistic from the rounded CSV values."""
    name_of = {v: k for k, v in RAW_HEADERS.items()}
    cols = {h: [] for h in header}
    for row in rows:
        for h, v in zip(header, row):
            cols[h].append(float(v))
    outcome = np.array(cols[OUTCOME_HEADER])
    died = outcome == 1
    assert died.sum() == N_DIED and (~died).sum() == N_SURV

    for raw, values in cols.items():
        if raw == OUTCOME_HEADER:
            continue
        name = name_of[raw]
        v = np.array(values)
        if name in MOMENTS:
            m1, s1, m0, s0 = MOMENTS[name]
            for mask, m_t, s_t in ((died, m1, s1), (~died, m0, s0)):
                m_hat, s_hat = v[mask].mean(), v[mask].std(ddof=1)
                assert abs(m_hat - m_t) < 0.02, (name, m_hat, m_t)
                assert abs(s_hat - s_t) < 0.02, (name, s_hat, s_t)
        else:
            c1, c0 = BINARY_COUNTS[name]
            assert int(v[died].sum()) == c1, (name, v[died].sum(), c1)
            assert int(v[~died].sum()) == c0


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "src" / "amirisk" / "data" / "ami_cohort.csv"
    )
    rows, header = generate()
    verify(rows, header)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)] + [",".join(r) for r in rows]
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
