"""Published reference accuracies for non-binding comparison tables.

These numbers depend on corpora, preprocessing details and seeds that are
not fully recoverable, so they are displayed next to fresh results as
context and never asserted by any test.
"""

REFERENCE = {
    "cnn_top1": 0.85,            # best top-1, 500 epochs, 60/20/20 split
    "svm_best_accuracy": 0.4811, # linear kernel, 100 coefficients
    "per_class_accuracy": {"angry": 0.868, "disgust": 0.78, "calm": 0.72},
}


def comparison_table(measured: dict) -> str:
    """Two-column table of measured vs reference values with deltas."""
    lines = [f"{'metric':<24}{'measured':>10}{'reference':>11}{'delta':>9}"]
    flat_ref = {"cnn_top1": REFERENCE["cnn_top1"],
                "svm_best_accuracy": REFERENCE["svm_best_accuracy"]}
    for name, ref in REFERENCE["per_class_accuracy"].items():
        flat_ref[f"acc_{name}"] = ref
    for key, ref in flat_ref.items():
        if key in measured:
            got = measured[key]
            lines.append(f"{key:<24}{got:>10.4f}{ref:>11.4f}{got - ref:>+9.4f}")
        else:
            lines.append(f"{key:<24}{'-':>10}{ref:>11.4f}{'-':>9}")
    return "\n".join(lines) + "\n"
