"""Smoke test for the `xspn` extension module.

Build and install first:

    cd crates/python && maturin build --release -o dist && pip install dist/xspn-*.whl
"""

import itertools
import math
import os
import sys
import tempfile

import xspn


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    if not ok:
        check.failed = True


check.failed = False


def main():
    train = xspn.generate("parity", 10, 2000, seed=1)
    test = xspn.generate("parity", 10, 500, seed=2)
    check("parity rows are even", all(sum(r) % 2 == 0 for r in train))

    net, counters = xspn.learn(train)
    census = net.leaf_census()
    check("single exchangeable leaf", net.node_count == 1 and census["exchangeable_counting"] == 1, repr(net))
    check("parameter count", net.parameter_count == 11)
    check("one exchangeability test", counters["exchangeability_tests"] == 1, str(counters))

    ll = net.mean_log_likelihood(test)
    optimum = xspn.analytic_loglik("parity", 10)
    check("test log-likelihood near optimum", abs(ll - optimum) < 0.01, f"{ll:.4f} vs {optimum:.4f}")

    total = sum(math.exp(net.log_evaluate(list(x))) for x in itertools.product([0, 1], repeat=10))
    check("joint sums to one", abs(total - 1.0) < 1e-9, f"{total:.12f}")

    evidence = [1, None, 0, None, None, 1, None, None, None, None]
    brute = sum(
        math.exp(net.log_evaluate(list(x)))
        for x in itertools.product([0, 1], repeat=10)
        if all(e is None or e == v for e, v in zip(evidence, x))
    )
    check("marginal matches enumeration", abs(math.exp(net.log_marginal(evidence)) - brute) < 1e-12)
    check("empty evidence", abs(net.log_marginal([None] * 10)) < 1e-12)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        net.save(path)
        back = xspn.Network.load(path)
        check("model round trip", back.log_likelihoods(test) == net.log_likelihoods(test))
        with open(path) as f:
            text = f.read().replace('"weights"', '"wieghts"', 1)
        try:
            xspn.Network.from_json(text)
            check("schema error raised", False)
        except xspn.ModelError as e:
            check("schema error raised", "$.nodes[0]" in str(e), str(e))

    spn, _ = xspn.learn(train, variant="SPN", min_instances=200)
    check("SPN has no exchangeable leaves", spn.leaf_census()["exchangeable_counting"] == 0)
    check("SPN fits parity worse", spn.mean_log_likelihood(test) < ll - 0.3)

    labeled = xspn.generate("parity", 12, 2000, seed=3, labeled=True)
    labeled_test = xspn.generate("parity", 12, 500, seed=4, labeled=True)
    rows, labels = [r[:-1] for r in labeled], [r[-1] for r in labeled]
    test_rows, test_labels = [r[:-1] for r in labeled_test], [r[-1] for r in labeled_test]
    clf = xspn.Classifier.fit(rows, labels)
    acc = clf.accuracy(test_rows, test_labels)
    check("parity classification", acc >= 0.98, f"accuracy={acc:.3f}")
    post = clf.posteriors(test_rows[:5])
    check("posteriors normalized", all(abs(sum(p) - 1.0) < 1e-12 for p in post))
    check("classifier round trip", xspn.Classifier.from_json(clf.to_json()).predict(test_rows) == clf.predict(test_rows))

    leaf = xspn.ExchangeableLeaf.fit([0, 1, 2, 3], [[1, 0, 0, 0], [0, 1, 1, 0], [1, 1, 1, 1]], alpha=0.0)
    check("leaf class probabilities", leaf.class_probabilities() == [0.0, 1 / 3, 1 / 3, 0.0, 1 / 3])
    check("leaf permutation invariance", leaf.log_prob([0, 0, 1, 1]) == leaf.log_prob([1, 0, 1, 0]))
    check("leaf weight", abs(math.exp(leaf.log_prob([0, 1, 0, 0])) - 1 / 12) < 1e-15)

    rows_mevm, truth, true_ll = xspn.generate_mevm(20, 500, seed=5)
    check("mevm truth", abs(truth.mean_log_likelihood(rows_mevm) - true_ll) < 1e-9, f"{true_ll:.4f}")

    exch, p = xspn.exchangeability_test(train, 0.1)
    check("parity is exchangeable", exch, f"min p={p:.3g}")

    try:
        xspn.learn(train, test_mode="full")
        check("capacity error", False)
    except xspn.CapacityError:
        check("capacity error", True)
    try:
        xspn.learn(train, variant="nope")
        check("bad variant", False)
    except ValueError:
        check("bad variant", True)

    return 1 if check.failed else 0


if __name__ == "__main__":
    sys.exit(main())
