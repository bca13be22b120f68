"""Smoke test for the tensorlift extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import tensorlift as tl

GOLDEN_PE = [
    "%t0 = convert(%in_a, s32)",
    "%t1 = convert(%in_b, s32)",
    "%t2 = dot(%t0, %t1, lhs_contracting_dims={1}, rhs_contracting_dims={0})",
    "%t3 = add(%t2, %in_d)",
    "%pe_out = clamp(-128, %t3, 127)",
]


def main():
    pe, expect = tl.generate("pe", input_width=8, acc_width=32, output_width=8)
    assert pe.functions == ["pe_mac__pe_out"], pe.functions
    assert "ops" in expect

    lifted, reports = tl.lift(pe)
    assert len(reports) == 8, reports
    assert (pe.op_count(), lifted.op_count()) == (237, 11)
    assert tl.Module.parse(str(lifted)) == lifted

    (report,) = tl.check_equivalence(pe, lifted, restrict=True)
    assert report.equivalent and report.verdict in ("equivalent", "sampled"), report.text

    assembly = tl.assemble(lifted)
    body = [line.strip() for line in assembly.text.splitlines() if line.strip().startswith("%")]
    assert body == GOLDEN_PE, body
    assert dict(assembly.routes) == {"pe_mac": "compute"}

    corpus, _ = tl.full_corpus(0)
    lifted_corpus, _ = tl.lift(corpus, workers=2)
    spec = tl.assemble(lifted_corpus)
    assert spec.orderings == ["preload before compute via state"], spec.orderings
    assert "# banked: strides x 3 select rs1[4:3]" in spec.text

    chain, _ = tl.generate("mac_chain", n=4)
    chain, _ = tl.lift(chain)
    mutant, what = tl.mutate(chain, "dot4__acc", 3)
    (r,) = tl.check_equivalence(chain, mutant)
    assert not r and r.verdict == "counterexample", (what, r.text)
    assert "(check-sat)" in tl.emit_smt(chain, mutant, "dot4__acc")

    try:
        tl.generate("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown design accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
