"""Smoke test for the painvas_py extension module.

Build the extension and place it next to this script first:

    cargo build -p painvas-py --release --features extension-module
    cp target/release/libpainvas_py.so python/painvas_py.so
"""

import json
import math
import sys
import tempfile

import painvas_py as pv


def main() -> int:
    assert pv.compute_pspi(2, 3, 1, 0, 4, 1) == 2 + 3 + 4 + 1
    assert math.isclose(pv.scale_pspi(8), 0.5)
    assert math.isclose(pv.scale_pspi(15, 15), 1.0)

    ifes = pv.compute_ifes("P", [(1, 3), (3, 3), (0, 0)], 2, 7)
    assert ifes["alpha_used"] == 2 and len(ifes["selected"]) == 2
    assert pv.compute_ifes("P", [(1, 3)], 0, 0)["p"] == 1.0

    assert math.isclose(pv.mae([1.0, 2.0], [2.0, 4.0]), 1.5)
    assert math.isclose(pv.icc31([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]), 1.0)
    assert pv.icc31([2.0, 2.0], [2.0, 2.0]) is None

    synth = json.dumps({"n_persons": 6, "sequences_per_person": 4, "min_len": 20, "max_len": 30})
    cohort = pv.Cohort.synthetic(3, synth)
    assert len(cohort) == 6 and cohort.num_sequences == 24
    seq = cohort.sequence(cohort.person_ids[0], 0)
    assert len(seq["frames"]) == len(seq["pspi"])

    with tempfile.TemporaryDirectory() as tmp:
        manifest = cohort.save(tmp + "/cohort")
        again = pv.Cohort.load(manifest)
        assert again.person_ids == cohort.person_ids

        cfg = pv.ExperimentConfig(json.dumps({
            "cohort": {"synthetic": {"config": json.loads(synth), "seed": 3}},
            "split": {"n_train": 4, "seed": 1},
            "first_stage": "gt-pspi",
            "alphas": [0, 1],
            "repetitions": 2,
            "hcrf": {"num_states": 3, "lambda_grid": [], "lbfgs": {"max_iter": 40}},
        }))
        train, test = cohort.split(4, 1)
        artifacts = pv.Artifacts.train(cfg, train)
        pid = test.person_ids[0]
        seq = test.sequence(pid, 0)
        est = artifacts.estimate_pspi(seq["frames"], seq["pspi"])
        assert all(0.0 <= v <= 1.0 for v in est)
        vas = artifacts.predict_vas(seq["frames"], 1.0, seq["pspi"])
        assert 0 <= vas <= 10
        out = artifacts.infer(test, pid, 1, 5)
        assert len(out["predictions"]) == 3

        report = pv.run_experiment(cfg, tmp + "/run")
        assert [s["alpha"] for s in report["summary"]] == [0, 1]
        print(cfg)
        print(cohort)
        for s in report["summary"]:
            print(f"alpha={s['alpha']} mae={s['mae_mean']:.3f}±{s['mae_std']:.3f}")

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
