def pytest_addoption(parser):
    parser.addoption("--run-oracles", action="store_true", default=False,
                     help="recompute the frozen brute-force oracle values")
