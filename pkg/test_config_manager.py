import os
import tempfile

import yaml

from config_manager import ConfigError, ConfigManager, deep_merge, default_config

REPO_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.yaml")


def write_yaml(directory, name, payload):
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8") as f:
        if isinstance(payload, str):
            f.write(payload)
        else:
            yaml.safe_dump(payload, f)
    return path


def test_defaults_without_file():
    manager = ConfigManager()
    assert manager.get_setting("mcmc", "thin") == 20
    assert manager.get_setting("estimand", "cri_level") == 0.99
    assert len(manager.get_setting("sensitivity", "psi_grid")) == 9
    assert manager.get_setting("prior", "a_beta") is None
    assert manager.get_setting("no", "such", "key") is None


def test_repository_config_lists_every_default_key():
    manager = ConfigManager(REPO_CONFIG)

    def keys(tree, prefix=()):
        for key, value in tree.items():
            if isinstance(value, dict):
                yield from keys(value, prefix + (key,))
            else:
                yield prefix + (key,)

    with open(REPO_CONFIG, encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    assert set(keys(default_config())) == set(keys(raw))
    assert manager.get_setting("simulation", "truth_bootstrap") == 100


def test_partial_file_is_merged_over_defaults():
    with tempfile.TemporaryDirectory() as tmp:
        path = write_yaml(tmp, "run.yaml", {"mcmc": {"thin": 5}, "seed": 11})
        manager = ConfigManager(path)
    assert manager.get_setting("mcmc", "thin") == 5
    assert manager.get_setting("mcmc", "burn_in") == 20000
    assert manager.get_setting("seed") == 11


def test_unreadable_files():
    with tempfile.TemporaryDirectory() as tmp:
        for path in (os.path.join(tmp, "absent.yaml"),
                     write_yaml(tmp, "broken.yaml", "mcmc: [1, 2\n"),
                     write_yaml(tmp, "list.yaml", "- 1\n- 2\n")):
            try:
                ConfigManager(path)
            except ConfigError:
                continue
            raise AssertionError(f"{path} should be rejected")
        empty = ConfigManager(write_yaml(tmp, "empty.yaml", ""))
    assert empty.config == default_config()


def test_overrides_parse_yaml_values():
    manager = ConfigManager()
    manager.apply_overrides(["mcmc.burn_in=10", "estimand.rho_grid=[0.1, 0.2]", "dataset.path=data.csv",
                             "estimand.subgroups=[{X1: 1}]"])
    assert manager.get_setting("mcmc", "burn_in") == 10
    assert manager.get_setting("estimand", "rho_grid") == [0.1, 0.2]
    assert manager.get_setting("dataset", "path") == "data.csv"
    assert manager.get_setting("estimand", "subgroups") == [{"X1": 1}]
    for bad in ("mcmc.burn_in", "=3", "a.b=[1, 2"):
        try:
            manager.apply_overrides([bad])
        except ConfigError:
            continue
        raise AssertionError(f"override {bad!r} should be rejected")


def test_seed_resolution_order():
    previous = os.environ.pop("RESQRL_SEED", None)
    try:
        manager = ConfigManager()
        try:
            manager.resolve_seed()
        except ConfigError:
            pass
        else:
            raise AssertionError("a missing seed should be rejected")
        os.environ["RESQRL_SEED"] = "17"
        assert ConfigManager().resolve_seed() == 17
        manager = ConfigManager()
        manager.set_setting(5, "seed")
        assert manager.resolve_seed() == 5
        assert manager.resolve_seed(9) == 9 and manager.get_setting("seed") == 9
        for bad in (-1, "abc"):
            try:
                ConfigManager().resolve_seed(bad)
            except ConfigError:
                continue
            raise AssertionError(f"seed {bad!r} should be rejected")
    finally:
        os.environ.pop("RESQRL_SEED", None)
        if previous is not None:
            os.environ["RESQRL_SEED"] = previous


def test_workers_default_to_available_cores():
    cores = os.cpu_count() or 1
    assert default_config()["workers"] == cores
    assert ConfigManager().resolve_workers() == cores
    manager = ConfigManager(REPO_CONFIG)
    assert manager.resolve_workers() == cores and manager.get_setting("workers") == cores
    manager = ConfigManager()
    manager.apply_overrides(["workers=3"])
    assert manager.resolve_workers() == 3
    for bad in ("workers=-2", "workers=many"):
        manager = ConfigManager()
        manager.apply_overrides([bad])
        try:
            manager.resolve_workers()
        except ConfigError:
            continue
        raise AssertionError(f"{bad} should be rejected")


def test_save_round_trip():
    manager = ConfigManager()
    manager.set_setting(3, "mcmc", "k_new")
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "nested", "saved.yaml")
        manager.save_config(path)
        again = ConfigManager(path)
    assert again.config == manager.config
    try:
        ConfigManager().save_config()
    except ConfigError:
        pass
    else:
        raise AssertionError("saving without a path should fail")


def test_deep_merge_does_not_mutate():
    base = {"a": {"b": 1, "c": 2}}
    merged = deep_merge(base, {"a": {"b": 5}, "d": 1})
    assert merged == {"a": {"b": 5, "c": 2}, "d": 1}
    assert base == {"a": {"b": 1, "c": 2}}


def run_tests():
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    for test in tests:
        print(f"Running {test.__name__}...")
        test()
    print(f"All {len(tests)} tests passed")


if __name__ == "__main__":
    run_tests()
