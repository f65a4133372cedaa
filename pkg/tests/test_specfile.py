import numpy as np
import pytest

from lgocv.approx import find_mode
from lgocv.simulate import (SCENARIOS, scenario_data, scenario_model,
                            scenario_spec_text)
from lgocv.specfile import SpecError, load_data, load_model, write_data


def write_pair(tmp_path, spec_text, data):
    spec = tmp_path / "model.ini"
    spec.write_text(spec_text)
    dpath = tmp_path / "data.csv"
    write_data(str(dpath), data)
    return str(spec), str(dpath)


def test_data_round_trip(tmp_path):
    data = {"y": np.array([1.5, -0.25]), "x": np.array([0.0, 3.0])}
    path = tmp_path / "d.csv"
    write_data(str(path), data)
    back = load_data(str(path))
    assert set(back) == {"y", "x"}
    for k in data:
        assert np.array_equal(back[k], data[k])


def test_data_errors(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("")
    with pytest.raises(SpecError):
        load_data(str(path))
    path.write_text("y,x\n1.0\n")
    with pytest.raises(SpecError):
        load_data(str(path))
    path.write_text("y\nfoo\n")
    with pytest.raises(SpecError):
        load_data(str(path))
    with pytest.raises(SpecError):
        load_data(str(tmp_path / "missing.csv"))


@pytest.mark.parametrize("name", [s for s in SCENARIOS if s != "ar1-forecast"])
def test_multilevel_scenarios_round_trip(tmp_path, name):
    data = scenario_data(name, seed=1)
    direct = scenario_model(name, data)
    spec, dpath = write_pair(tmp_path, scenario_spec_text(name), data)
    loaded = load_model(spec, dpath)
    assert loaded.n_obs == direct.n_obs
    assert loaded.theta_dim == direct.theta_dim
    assert np.array_equal(loaded.y, direct.y)
    theta = direct.hyper_point(direct.theta_init())
    assert np.array_equal(loaded.prior_precision(theta).toarray(),
                          direct.prior_precision(theta).toarray())
    assert np.array_equal(loaded.design.toarray(), direct.design.toarray())
    mu_a = find_mode(direct, theta).mu
    mu_b = find_mode(loaded, theta).mu
    assert np.max(np.abs(mu_a - mu_b)) <= 1e-12


def test_ar1_scenario_round_trips_small(tmp_path):
    # shrink the series: the spec text carries an explicit size
    data = scenario_data("ar1-forecast", seed=1)
    keep = 40
    data = {k: v[:keep] for k, v in data.items()}
    direct = scenario_model("ar1-forecast", data)
    text = scenario_spec_text("ar1-forecast").replace("size = 2000",
                                                      f"size = {keep}")
    spec, dpath = write_pair(tmp_path, text, data)
    loaded = load_model(spec, dpath)
    theta = direct.hyper_point(np.zeros(0))
    assert np.allclose(loaded.prior_precision(theta).toarray(),
                       direct.prior_precision(theta).toarray())
    assert np.array_equal(loaded.design.toarray(), direct.design.toarray())


def test_fixed_covariates_including_literal_one(tmp_path):
    data = {"y": np.array([0.1, 0.2, 0.3]), "x": np.array([1.0, 2.0, 3.0])}
    text = ("[likelihood]\nfamily = gaussian\nresponse = y\n\n"
            "[component beta]\nkind = fixed\ncovariates = 1 x\n"
            "precision = 0.5\n")
    model = load_model(*write_pair(tmp_path, text, data))
    assert model.latent_size == 2
    A = model.design.toarray()
    assert np.array_equal(A[:, 0], np.ones(3))
    assert np.array_equal(A[:, 1], data["x"])
    theta = model.hyper_point(np.zeros(0))
    assert np.allclose(model.prior_precision(theta).toarray(), 0.5 * np.eye(2))


def test_constraint_section(tmp_path):
    data = {"y": np.zeros(4), "g": np.array([0.0, 1.0, 2.0, 3.0])}
    text = ("[likelihood]\nfamily = gaussian\nresponse = y\n\n"
            "[component u]\nkind = iid\nindex = g\n\n"
            "[constraint sumzero]\ncomponent = u\n"
            "weights = 1 1 1 1\nvalue = 0\n")
    model = load_model(*write_pair(tmp_path, text, data))
    C, e = model.constraints
    assert np.array_equal(C, np.ones((1, 4)))
    assert e[0] == 0.0


def test_besag_component_with_graph(tmp_path):
    gpath = tmp_path / "graph.txt"
    gpath.write_text("0 1\n1 2\n")
    data = {"y": np.array([1.0, 2.0, 3.0]), "region": np.array([0.0, 1.0, 2.0])}
    text = ("[likelihood]\nfamily = poisson\nresponse = y\noffset = 2.0\n\n"
            "[component space]\nkind = besag\nindex = region\n\n"
            "[component intercept]\nkind = fixed\ncovariates = 1\n")
    model = load_model(*write_pair(tmp_path, text, data),
                       graph_path=str(gpath))
    assert model.latent_size == 4
    assert model.has_intrinsic
    C, _ = model.constraints
    assert C.shape[0] == 1


def test_binomial_trials_column(tmp_path):
    data = {"y": np.array([1.0, 2.0]), "n": np.array([5.0, 8.0]),
            "g": np.array([0.0, 1.0])}
    text = ("[likelihood]\nfamily = binomial\nresponse = y\ntrials = n\n\n"
            "[component u]\nkind = iid\nindex = g\n")
    model = load_model(*write_pair(tmp_path, text, data))
    assert np.array_equal(np.asarray(model.likelihood.n_trials), [5.0, 8.0])


def test_spec_parse_errors(tmp_path):
    data = {"y": np.zeros(2), "g": np.array([0.0, 1.0])}
    cases = [
        "[component u]\nkind = iid\nindex = g\n",                # no likelihood
        "[likelihood]\nfamily = weibull\nresponse = y\n"
        "\n[component u]\nkind = iid\nindex = g\n",              # bad family
        "[likelihood]\nfamily = gaussian\nresponse = y\n",       # no components
        "[likelihood]\nfamily = gaussian\nresponse = y\n"
        "\n[component u]\nkind = iid\nindex = missing\n",        # bad column
        "[likelihood]\nfamily = gaussian\nresponse = y\n"
        "\n[component u]\nkind = magic\nindex = g\n",            # bad kind
        "[likelihood]\nfamily = gaussian\nresponse = y\n"
        "\n[component u]\nkind = iid\nindex = g\n\n[mystery]\na = 1\n",
        "[likelihood]\nfamily = gaussian\nresponse = y\n"
        "\n[component u]\nkind = iid\nindex = g\n"
        "\n[constraint c]\ncomponent = u\nweights = 1\n",        # wrong length
    ]
    for text in cases:
        with pytest.raises(SpecError):
            load_model(*write_pair(tmp_path, text, data))
    with pytest.raises(SpecError):
        load_model(str(tmp_path / "nope.ini"), str(tmp_path / "data.csv"))


def test_fractional_index_rejected(tmp_path):
    data = {"y": np.zeros(2), "g": np.array([0.0, 0.5])}
    text = ("[likelihood]\nfamily = gaussian\nresponse = y\n\n"
            "[component u]\nkind = iid\nindex = g\n")
    with pytest.raises(SpecError):
        load_model(*write_pair(tmp_path, text, data))
