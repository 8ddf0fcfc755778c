import numpy as np
import pytest

from minhelm.cli import (ConfigError, expression, main, parse_complex, parse_config,
                         parse_inclusion, parse_study, run, serialize_config)
from minhelm.grid import GridError

PLANE = "n=30\nomega=2\nrho=-5+5i\nkappa=4-4i\nbc=dirichlet\ncase=manufactured"


@pytest.mark.parametrize("text, value", [
    ("-5+5i", -5 + 5j), ("4-4i", 4 - 4j), ("1+.011i", 1 + 0.011j), ("3.33i", 3.33j),
    ("-i", -1j), ("2", 2 + 0j), ("1e-3-2.5e2i", 1e-3 - 250j), (" -1 + 0.333i ", -1 + 0.333j),
])
def test_parse_complex(text, value):
    assert parse_complex(text) == value


@pytest.mark.parametrize("text", ["1+xi", "i5", "1+2j", "", "1++2i", "nan"])
def test_parse_complex_rejects(text):
    with pytest.raises(ValueError):
        parse_complex(text)


def test_plane_wave_config_defaults():
    cfg = parse_config(PLANE)
    assert (cfg.n, cfg.omega, cfg.rho, cfg.kappa) == (30, 2.0, -5 + 5j, 4 - 4j)
    assert cfg.tol == 1e-8 and cfg.precond and cfg.eval_n == 1500


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\nn=10  # grid\nomega = 1.5\n")
    assert cfg.n == 10 and cfg.omega == 1.5


def test_empty_text_missing_n():
    with pytest.raises(ConfigError, match="'n'"):
        parse_config("")


def test_too_small_grid():
    with pytest.raises(GridError):
        parse_config("n=2\nomega=1")


def test_errors_name_line_and_key():
    with pytest.raises(ConfigError, match="line 2: unknown key 'colour'"):
        parse_config("n=5\ncolour=blue\nomega=1")
    with pytest.raises(ConfigError, match="line 3: bad value for 'kappa'"):
        parse_config("n=5\nomega=1\nkappa=4-4j")
    with pytest.raises(ConfigError, match="line 1: expected key=value"):
        parse_config("n 5")


@pytest.mark.parametrize("text", [
    "n=5\nomega=1\ntol=0", "n=5\nomega=-1", "n=5\nomega=inf", "n=5\nomega=1\nbc=neumann",
    "n=5\nomega=1\nbc=robin", "n=5\nomega=1\ncase=expression", "n=5\nomega=1\nstudy=30-100",
    "n=5\nomega=1\ninclusion=square 1 2", "n=5\nomega=1\ncase=scene",
    "n=5\nomega=1\ninclusion=disc .5 .5 .2",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides_win():
    cfg = parse_config(PLANE, {"n": 12, "tol": 1e-6, "precond": False, "mode": None})
    assert cfg.n == 12 and cfg.tol == 1e-6 and not cfg.precond and cfg.mode == "both"


def test_roundtrip_full_config():
    text = ("n=40\nomega=10\nbc=robin\ncase=scene\nrho=1+.011i\nkappa=1+.011i\n"
            "inclusion=bar 0.2 0.2 0.8 0.8 0.1\nrho_in=2+.011i\nkappa_in=1+.011i\n"
            "a=-1+.333i\ng=3.33i\nperiodic_x=on\non_indefinite=minres\nout=/tmp/x\n")
    cfg = parse_config(text)
    assert parse_config(serialize_config(cfg)) == cfg


def test_study_range():
    assert parse_study("30:100:10") == [30, 40, 50, 60, 70, 80, 90, 100]


def test_inclusion_shapes():
    disc = parse_inclusion("disc 0.5 0.5 0.2")
    assert disc(np.array(0.5), np.array(0.6)) and not disc(np.array(0.1), np.array(0.1))
    bar = parse_inclusion("bar 0.2 0.2 0.8 0.8 0.1")
    assert bar(np.array(0.5), np.array(0.5)) and bar(np.array(0.7), np.array(0.72))
    assert not bar(np.array(0.8), np.array(0.2)) and not bar(np.array(0.9), np.array(0.9))


def test_expression_sandbox():
    f = expression("sin(6*pi*x)*cos(3*pi*y)")
    assert f(np.array(1 / 12), np.array(0.0)) == pytest.approx(1.0)
    assert expression("3*x+5*y+2")(np.array(0.0), np.array(0.0)) == 2.0
    with pytest.raises(ConfigError):
        expression("__import__('os')")


def read_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_single_run_outputs(tmp_path):
    cfg = parse_config(PLANE.replace("n=30", "n=12") + f"\ndiagnostics=on\nout={tmp_path}\neval_n=200")
    assert run(cfg) == 0
    field = (tmp_path / "field.csv").read_text().splitlines()
    assert field[0] == "x,y,P_re,P_im,v1_re,v1_im,v2_re,v2_im"
    assert len(field) == 1 + 144
    data = read_csv(tmp_path / "field.csv")
    np.testing.assert_array_equal(data[:13, 1], [0] * 12 + [1 / 11])  # row-major, x fastest
    log = (tmp_path / "iterations_real-primal.csv").read_text().splitlines()
    assert log[0] == "iter,relres,inner_iters"
    diag = dict(line.split("=", 1) for line in (tmp_path / "diagnostics.txt").read_text().splitlines())
    assert diag["status"] == "ok"
    assert float(diag["real-primal.cond_MinvA"]) < float(diag["real-primal.cond_A"])
    assert int(diag["real-primal.iterations"]) == len(log) - 1


def test_seventeen_significant_digits(tmp_path):
    cfg = parse_config(f"n=5\nomega=2\nout={tmp_path}\neval_n=20")
    run(cfg)
    row = (tmp_path / "field.csv").read_text().splitlines()[7].split(",")
    assert any(len(v.lstrip("-").replace(".", "").lstrip("0").split("e")[0]) == 17 for v in row)


def test_expression_run(tmp_path):
    cfg = parse_config("n=10\nomega=10\ncase=expression\npsi_r=sin(6*pi*x)*cos(3*pi*y)\n"
                       "psi_i=3*x+5*y+2\nrho=.01+.001i\nkappa=.01-.003i\ninclusion=disc 0.5 0.5 0.2\n"
                       f"rho_in=-5+5i\nkappa_in=4-4i\nout={tmp_path}")
    assert run(cfg) == 0
    data = read_csv(tmp_path / "field.csv")
    assert np.all(np.isfinite(data))


def test_study_run(tmp_path):
    cfg = parse_config(f"n=10\nomega=2\nstudy=6:12:3\neval_n=100\nout={tmp_path}")
    assert run(cfg) == 0
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert lines[0] == "N,h,vnorm_error" and len(lines) == 4
    assert read_csv(tmp_path / "convergence.csv")[:, 0].tolist() == [6, 9, 12]


def test_failed_solve_nonzero_exit(tmp_path):
    cfg = parse_config(f"n=20\nomega=2\nmaxit=2\nout={tmp_path}\neval_n=50")
    with pytest.warns(UserWarning):
        assert run(cfg) == 1
    status = (tmp_path / "diagnostics.txt").read_text().splitlines()[-1]
    assert status.startswith("status=failed")
    assert (tmp_path / "field.csv").exists()


def test_main_flags(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(PLANE)
    out = tmp_path / "o"
    code = main(["--config", str(cfg), "--n", "8", "--no-precond", "--eval-n", "50",
                 "--mode", "real-primal", "--out", str(out), "--tol", "1e-9"])
    assert code == 0
    assert "status=ok" in capsys.readouterr().out
    assert (out / "iterations_real-primal.csv").exists()
    assert not (out / "iterations_imag-primal.csv").exists()


def test_main_config_error(capsys):
    assert main(["--n", "2", "--omega", "1"]) == 2
    assert "N >= 3" in capsys.readouterr().err


def test_rerun_byte_identical(tmp_path):
    text = PLANE.replace("n=30", "n=10") + "\neval_n=100\ndiagnostics=on"
    for d in ("a", "b"):
        run(parse_config(text + f"\nout={tmp_path / d}"))
    for name in ("field.csv", "iterations_real-primal.csv", "iterations_imag-primal.csv",
                 "diagnostics.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
