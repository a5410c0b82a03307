"""Smoke test for the ioident_py extension module."""

import math

import ioident_py as io


def main():
    lti1, lti2 = io.Lti(1, 1, 1), io.Lti(2, 1, 2)
    assert lti1.gain() == lti2.gain() == 1.0
    assert not lti1.equivalent(lti2)
    assert io.Lti(1, 2, 3).similarity(io.Lti(1, 6, 1)) == [[3.0]]
    assert abs(io.Lti([[-1.0, 0.0], [0.0, -2.0]], [1, 1], [1, 2]).gain() - 2.0) < 1e-12

    model = io.Model("lambda-system")
    assert model.param_names == ["lambda", "a_tot"]
    traj = model.simulate(io.Signal("step:1"), 3.0)
    assert max(abs(y - 2.0) for y in traj.outputs) < 1e-9
    assert traj.to_csv().startswith("t,u,y,x_x,x_z\n")

    step = model.sensitivities(io.Signal.step(1.0), 5.0)
    gram = step.gram()
    assert gram["rank"] == 1 and gram["null_directions"] == [[1.0, 0.0]]
    assert math.isinf(step.cramer_rao(0.01)["crb"][0])

    times = [0.1 * k for k in range(1, 41)]
    data = model.synthesize(io.Signal.pulse(1, 0, 1), times, params={"lambda": 1.3})
    fit = model.fit([data], {"lambda": (0.5, 0.01, 5.0)})
    assert abs(fit["estimate"]["lambda"] - 1.3) < 1e-6, fit

    noisy = io.Experiment(data.signal, data.times, data.observations, 0.01)
    axis = [0.2 + 0.02 * k for k in range(141)]
    post = model.posterior([("lambda", axis)], [noisy])
    assert abs(post["mode"][0] - 1.3) <= 0.02 + 1e-12
    assert abs(sum(post["probabilities"]) - 1.0) < 1e-12

    h = 0.01
    ys = [1 - math.exp(-h * k) for k in range(301)]
    k = io.deconvolve(ys, [1.0] * 301, h, ridge=0.0)
    assert max(abs(v - math.exp(-h * i)) for i, v in enumerate(k)) < 1e-2

    assert io.gray_box((1, 1), (0.01, 0.1)) == (10.0, 100.0)
    code, out, _ = io.run_command(["gain", "--a", "2", "--b", "1", "--c", "2"])
    assert (code, out) == (0, "1\n")
    try:
        io.Signal("wobble:1")
    except io.IoidentError:
        pass
    else:
        raise AssertionError("bad spec accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
