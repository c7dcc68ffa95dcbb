import json

import numpy as np
import pytest

from gfflush import cli
from gfflush.bench import (
    CSV_FIELDS,
    DEFAULT_SWEEP,
    BenchRecord,
    ConfigError,
    config_from_mapping,
    emit_results,
    gen_random_spec,
    parse_config,
    parse_results,
    run_campaign,
    simulate,
    trial_design,
)

HEADER = "lambda,h,trial,setup_ms,solve_ms,total_ms,rank,candidates,verified,timed_out"


class TestParseConfig:
    def test_minimal_defaults(self):
        c = parse_config("mode: attack\nlambda: 8\n")
        assert (c.lam, c.b, c.shadow, c.taps, c.misr_taps, c.cap) == (8, 1, True, "random", "all-ones", 1 << 20)
        assert c.timeout is None

    def test_misr_chain_length(self):
        c = parse_config("mode: attack-misr\nlambda: 12\nh: 3\n")
        design, _ = trial_design(c, 12, 0)
        assert design.n == 4 and design.h == 3 and not design.shadow

    def test_misr_divisibility(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("mode: attack-misr\nlambda: 12\nh: 5\n")
        assert exc.value.field == "h"

    def test_nested_sections(self):
        c = parse_config(
            "mode: attack-misr\nlambda: 6\nmisr: {h: 2, taps: '10'}\nlfsr:\n  taps: '110001'\nseed: '101010'\n"
        )
        design, seed = trial_design(c, 6, 0)
        assert str(design.lfsr.taps) == "110001" and str(design.misr.taps) == "10"
        assert str(seed) == "101010"

    def test_bench_defaults(self):
        c = parse_config("mode: bench\n")
        assert c.lambdas == DEFAULT_SWEEP and c.timeout == 8 * 3600

    @pytest.mark.parametrize(
        "text,field",
        [
            ("mode: attack\n", "lambda"),
            ("mode: nope\nlambda: 8\n", "mode"),
            ("mode: attack\nlambda: 8\ncolour: red\n", "colour"),
            ("mode: attack\nlambda: 1\n", "lambda"),
            ("mode: attack\nlambda: 4\ntaps: '10'\n", "taps"),
            ("mode: attack\nlambda: 4\ntaps: '0000'\n", "taps"),
            ("mode: attack\nlambda: 4\nshadow: maybe\n", "shadow"),
            ("mode: brute-check\nlambda: 24\n", "lambda"),
            ("mode: attack\nlambda: [8, 16]\n", "lambda"),
            ("mode: attack\nlambda: 8\nh: 2\n", "h"),
            ("mode: attack-misr\nlambda: 8\n", "h"),
            ("mode: attack\nlambda: 8\ntimeout_secs: -1\n", "timeout_secs"),
            ("- just\n- a list\n", "document"),
            ("mode: [unclosed\n", "document"),
        ],
    )
    def test_rejections_name_field(self, text, field):
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert exc.value.field == field


class TestRandomSpec:
    def test_deterministic(self):
        a = gen_random_spec(32, np.random.default_rng(5))
        b = gen_random_spec(32, np.random.default_rng(5))
        assert a == b

    def test_c0_and_tap_balance(self):
        rng = np.random.default_rng(6)
        counts = np.zeros(8, dtype=int)
        for _ in range(1000):
            spec = gen_random_spec(8, rng)
            counts += spec.taps.to_list()
        assert counts[0] == 1000
        assert all(400 <= c <= 600 for c in counts[1:])


def cfg(**kw):
    doc = {"mode": "attack", "lambda": 16, "trials": 3}
    doc.update(kw)
    return config_from_mapping(doc)


class TestCampaign:
    def test_attack_all_verified(self):
        records, summary = run_campaign(cfg(**{"lambda": 64, "trials": 10}))
        assert len(records) == 10 and all(r.verified for r in records)
        assert summary[64]["all_verified"]
        assert all(r.total_ms >= r.solve_ms and r.total_ms >= r.setup_ms for r in records)

    def test_brute_check(self):
        records, _ = run_campaign(cfg(mode="brute-check", **{"lambda": 8, "trials": 10}))
        assert all(r.verified for r in records)
        records, _ = run_campaign(cfg(mode="brute-check", h=2, **{"lambda": 8, "trials": 5}))
        assert all(r.verified and r.h == 2 for r in records)

    def test_deterministic(self):
        c = cfg(mode="bench", **{"lambda": [8, 32], "trials": 4, "rng_seed": 9, "timeout_secs": None})
        a, _ = run_campaign(c)
        b, _ = run_campaign(c)
        assert [(r.lam, r.trial, r.rank, r.candidates) for r in a] == [
            (r.lam, r.trial, r.rank, r.candidates) for r in b
        ]

    def test_workers_preserve_order_and_results(self):
        serial, _ = run_campaign(cfg(trials=6))
        parallel, _ = run_campaign(cfg(trials=6, workers=3, timeout_secs=60))
        assert [(r.trial, r.rank, r.candidates) for r in parallel] == [
            (r.trial, r.rank, r.candidates) for r in serial
        ]

    def test_timeout_recorded(self):
        records, summary = run_campaign(cfg(**{"lambda": 600, "trials": 2, "timeout_secs": 0.001}))
        assert all(r.timed_out and not r.verified and r.rank is None for r in records)
        assert summary[600]["timed_out"] == 2

    def test_simulate(self):
        recs = simulate(cfg(mode="simulate", seed="0000000000000000"))
        assert all(set(r.observations) == {"0"} for r in recs)


def sample_records():
    return [
        BenchRecord(8, None, 0, 0.25, 0.5, 1.5, 8, 1, True, False),
        BenchRecord(12, 3, 1, 1.0, 2.0, 4.0, 10, 4, True, False),
        BenchRecord(500, None, 2, 10.0, 10.0, 10.0, None, None, False, True),
    ]


class TestEmit:
    def test_empty(self):
        assert emit_results([], "csv") == HEADER + "\n"
        assert ",".join(CSV_FIELDS) == HEADER

    @pytest.mark.parametrize("fmt", ["csv", "jsonl"])
    def test_roundtrip(self, fmt):
        recs = sample_records()
        assert parse_results(emit_results(recs, fmt), fmt) == recs

    def test_empty_h_field(self):
        lines = emit_results(sample_records(), "csv").splitlines()
        assert lines[1].split(",")[1] == ""
        assert lines[2].split(",")[1] == "3"

    def test_jsonl_field_names(self):
        row = json.loads(emit_results(sample_records(), "jsonl").splitlines()[0])
        assert tuple(row) == CSV_FIELDS


class TestCli:
    def test_attack_csv(self, capsys):
        assert cli.main(["attack", "--lambda", "32", "--trials", "2", "--quiet"]) == cli.EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0] == HEADER and len(out) == 3

    def test_out_file_and_config(self, tmp_path):
        conf = tmp_path / "exp.yaml"
        conf.write_text("lambda: 12\nmisr:\n  h: 4\ntrials: 2\nrng_seed: 3\n")
        dest = tmp_path / "res.jsonl"
        rc = cli.main(["attack-misr", "--config", str(conf), "--format", "jsonl", "--out", str(dest), "--quiet"])
        assert rc == cli.EXIT_OK
        recs = parse_results(dest.read_text(), "jsonl")
        assert [r.h for r in recs] == [4, 4] and all(r.verified for r in recs)

    def test_flag_overrides_config(self, tmp_path, capsys):
        conf = tmp_path / "exp.yaml"
        conf.write_text("lambda: 12\ntrials: 5\n")
        cli.main(["attack", "--config", str(conf), "--trials", "1", "--quiet"])
        assert len(capsys.readouterr().out.splitlines()) == 2

    def test_invalid_config(self, capsys):
        assert cli.main(["attack-misr", "--lambda", "12", "--h", "5"]) == cli.EXIT_BAD_CONFIG
        assert "h:" in capsys.readouterr().err

    def test_all_timed_out(self):
        rc = cli.main(["bench", "--lambda", "600", "--trials", "1", "--timeout-secs", "0.001", "--quiet"])
        assert rc == cli.EXIT_ALL_TIMED_OUT

    def test_model_mismatch(self, monkeypatch):
        from gfflush import bench
        from gfflush.attack import ModelMismatchError

        def broken(system):
            raise ModelMismatchError("forced")

        monkeypatch.setattr(bench, "solve_seed", broken)
        assert cli.main(["attack", "--lambda", "8", "--trials", "1"]) == cli.EXIT_MODEL_MISMATCH

    def test_simulate(self, capsys):
        assert cli.main(["simulate", "--lambda", "4", "--taps", "1100", "--seed", "1000", "--no-shadow"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "lambda,h,trial,taps,seed,observations"
        assert lines[1].split(",")[3:5] == ["1100", "1000"]
