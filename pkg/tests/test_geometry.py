import math

import numpy as np
import pytest

from harmonic_rank.geometry import ball_volume, EuclideanSpace, HyperbolicSpace, ProductSpace


def test_hyperbolic_points_on_hyperboloid():
    space = HyperbolicSpace(3)
    directions = np.random.default_rng(0).standard_normal((10, 3))
    directions /= np.linalg.norm(directions, axis=1)[:, None]

    points = space.point(directions, np.linspace(0.0, 20.0, 10))
    near = space.point(directions, np.linspace(0.0, 3.0, 10))

    assert points.shape == (10, 4)
    assert np.allclose(space.lorentz(near, near), -1.0, rtol=0, atol=1e-12)
    assert np.allclose(space.distance(space.basepoint(), points), np.linspace(0.0, 20.0, 10))


def test_hyperbolic_distance_far_out():
    # the Lorentz product cancels catastrophically out here, the polar form does not
    space = HyperbolicSpace(2)
    p = space.point(np.array([1.0, 0.0]), 32.0)
    q = space.point(np.array([math.cos(1e-6), math.sin(1e-6)]), 32.0)

    # sinh(d/2) = sinh(32)·sin(θ/2)
    expected = 2 * math.asinh(math.sinh(32.0) * math.sin(0.5e-6))
    assert float(space.distance(p, q)) == pytest.approx(expected, rel=1e-9)
    assert float(space.distance(p, p)) == 0.0


def test_hyperbolic_curvature_scaling():
    space = HyperbolicSpace(2, curvature=-4.0)
    p = space.point(np.array([1.0, 0.0]), 1.5)
    q = space.point(np.array([-1.0, 0.0]), 2.5)

    assert float(space.distance(p, q)) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        HyperbolicSpace(2, curvature=0.0)


def test_hyperbolic_right_angle():
    # hyperbolic Pythagoras: cosh c = cosh a·cosh b
    space = HyperbolicSpace(2)
    p = space.point(np.array([1.0, 0.0]), 1.0)
    q = space.point(np.array([0.0, 1.0]), 2.0)

    assert math.cosh(float(space.distance(p, q))) == pytest.approx(math.cosh(1.0) * math.cosh(2.0))


def test_hyperbolic_segment():
    space = HyperbolicSpace(2)
    p = space.point(np.array([1.0, 0.0]), 3.0)
    q = space.point(np.array([0.0, 1.0]), 2.0)
    length = float(space.distance(p, q))

    points = space.segment_points(p, q, np.linspace(0.0, 1.0, 11))

    assert np.allclose(points[0], p)
    assert np.allclose(points[-1], q)
    assert np.allclose(space.distance(p, points), np.linspace(0.0, length, 11), atol=1e-9)
    assert np.allclose(space.segment_points(p, p, [0.0, 0.5]), p)


def test_horosphere_volume():
    space = HyperbolicSpace(3)

    # flat horosphere: a disc with chord radius 2·sinh(ρ/2)
    assert space.horosphere_volume(2.0) == pytest.approx(math.pi * (2 * math.sinh(1.0)) ** 2)
    assert ProductSpace([space, EuclideanSpace(1)]).dim == 4


def test_ball_volume():
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)
    assert ball_volume(1, 3.0) == pytest.approx(6.0)


def test_euclidean():
    space = EuclideanSpace(2)
    p = space.point(np.array([0.6, 0.8]), 5.0)

    assert np.allclose(p, [3.0, 4.0])
    assert float(space.distance(space.basepoint(), p)) == pytest.approx(5.0)
    assert np.allclose(space.segment_points(space.basepoint(), p, [0.5]), [[1.5, 2.0]])


def test_product():
    space = ProductSpace([HyperbolicSpace(2), EuclideanSpace(1)])
    direction = np.array([0.6, 0.0, 0.8])
    p = space.point(direction, 10.0)
    hyperbolic, flat = space.split(p)

    assert space.dim == 3
    assert space.ambient_dim == 4
    assert float(space.factors[0].distance(space.factors[0].basepoint(), hyperbolic)) == pytest.approx(6.0)
    assert np.allclose(flat, [8.0])
    assert float(space.distance(space.basepoint(), p)) == pytest.approx(10.0)


def test_product_static_factor():
    space = ProductSpace([HyperbolicSpace(2), EuclideanSpace(1)])
    p = space.point(np.array([0.0, 0.0, 1.0]), 4.0)

    assert np.allclose(space.split(p)[0], space.factors[0].basepoint())
    assert float(space.distance(space.basepoint(), p)) == pytest.approx(4.0)


def test_product_segment():
    space = ProductSpace([HyperbolicSpace(2), EuclideanSpace(1)])
    p = space.point(np.array([0.0, 0.6, 0.8]), 5.0)
    q = space.point(np.array([-0.6, 0.0, -0.8]), 5.0)
    points = space.segment_points(p, q, np.linspace(0.0, 1.0, 5))

    # product geodesics have constant speed in every factor
    steps = space.distance(points[:-1], points[1:])
    assert np.allclose(steps, steps[0])
    assert float(steps.sum()) == pytest.approx(float(space.distance(p, q)))
