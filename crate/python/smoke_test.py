"""Smoke test for the compiled extension: torus and sphere groups, and the
relative classes of h = -s^2 over the torus."""

import json

import morse_pi1_py as m

TORUS = "cos(2*pi*x)+cos(2*pi*y)"


def main():
    torus = m.analyze("torus", TORUS)
    assert m.abelianization(torus) == (2, []), m.abelianization(torus)
    sphere = m.analyze("sphere", "z")
    assert m.abelianization(sphere) == (0, [])
    pres = json.loads(m.presentation_json(torus))
    assert len(pres["generators"]) == 2, pres

    c = json.loads(torus)
    c["provenance"] = "handwritten"
    profile = {
        "schema": "relpi1/v1",
        "shape": {"critical": [{"p": 0.0, "nature": "max"}], "limits": ["minus_inf", "minus_inf"]},
        "slabs": [c, c, c],
        "c": 1.0,
    }
    base = json.dumps({"kind": "formal", "side": "neg_inf"})
    labels = m.relative_classes(json.dumps(profile), base, 12)
    assert len(labels) == 2 and labels[0] == "1", labels

    try:
        m.analyze("klein", TORUS)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown manifold accepted")
    print("smoke test ok:", m.__version__, labels)


if __name__ == "__main__":
    main()
