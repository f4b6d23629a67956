"""Bundled study networks with known closed-form behaviour.

``case_a`` and ``case_b`` are the two-link workhorses (delays x and 1 + x
at demands 1 and 2): their equilibria, system optima and Price of Anarchy
have piecewise closed forms used throughout the test suite. ``example1``
is a three-link parallel network tuned so the critical fleet share lands
exactly at 0.25, with support changes at 0.25 and 0.95. ``example2`` is a
small general network (seven links, four paths, each path owning a link no
other path uses) for exploratory, non-parallel studies.
"""

from __future__ import annotations

from .netmodel import DelayPoly, Link, Network, OdSpec


def _parallel(name: str, delays: list[tuple[float, float, float, float]],
              demand: float, fleet_share: float = 0.0) -> Network:
    links = tuple(
        Link(id=f"l{i + 1}", tail="o", head="d", delay=DelayPoly(c))
        for i, c in enumerate(delays)
    )
    return Network(
        nodes=("o", "d"),
        links=links,
        od_pairs=(OdSpec("o", "d", demand, fleet_share),),
        name=name,
    )


def case_a() -> Network:
    """Two parallel links, delays x and 1 + x, demand 1.

    The fleet helps immediately: the critical share is 0, PoA(0) = 8/7 and
    the total delay falls as 1 - alpha/4 + alpha^2/8 down to the system
    optimum 7/8 at alpha = 1.
    """
    return _parallel(
        "case_a", [(0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0)], 1.0)


def case_b() -> Network:
    """Two parallel links, delays x and 1 + x, demand 2.

    The PoA stays at 24/23 for every fleet share up to the critical share
    1/2 and then falls to 1 at alpha = 1.
    """
    return _parallel(
        "case_b", [(0.0, 1.0, 0.0, 0.0), (1.0, 1.0, 0.0, 0.0)], 2.0)


def example1() -> Network:
    """Three parallel links, delays x, 0.2 + x and 1.6 + 2x, demand 4.

    At zero fleet share the selfish loads are (2, 1.8, 0.2) with common
    delay 2. The fleet spreads proportionally to inverse slopes, so the
    selfish flow on the third link hits zero exactly at share 0.25: the
    critical share. The selfish class leaves the second link near 0.95.
    """
    return _parallel(
        "example1",
        [(0.0, 1.0, 0.0, 0.0), (0.2, 1.0, 0.0, 0.0), (1.6, 2.0, 0.0, 0.0)],
        4.0,
    )


def example2() -> Network:
    """Seven links, four paths, one OD pair at demand 3; not parallel.

    Chain o -> a -> b -> d with bypass links o -> b and a -> d plus a
    direct corridor o -> c -> d. Every path owns a private link, so the
    equilibrium flow is unique whenever the load is. Used for exploratory
    (non-parallel) sweeps.
    """
    links = (
        Link("oa", "o", "a", DelayPoly((0.0, 1.0, 0.0, 0.0))),
        Link("ab", "a", "b", DelayPoly((0.5, 0.5, 0.0, 0.0))),
        Link("bd", "b", "d", DelayPoly((0.0, 1.0, 0.0, 0.0))),
        Link("ob", "o", "b", DelayPoly((1.0, 1.0, 0.0, 0.1))),
        Link("ad", "a", "d", DelayPoly((1.0, 0.5, 0.3, 0.0))),
        Link("oc", "o", "c", DelayPoly((0.5, 1.0, 0.0, 0.0))),
        Link("cd", "c", "d", DelayPoly((1.0, 1.0, 0.0, 0.0))),
    )
    return Network(
        nodes=("o", "a", "b", "c", "d"),
        links=links,
        od_pairs=(OdSpec("o", "d", 3.0, 0.0),),
        name="example2",
    )


def diamond() -> Network:
    """Four links o->a->d / o->b->d, two paths of two links each."""
    links = (
        Link("oa", "o", "a", DelayPoly((0.0, 1.0, 0.0, 0.0))),
        Link("ad", "a", "d", DelayPoly((0.5, 1.0, 0.0, 0.0))),
        Link("ob", "o", "b", DelayPoly((0.5, 1.0, 0.0, 0.0))),
        Link("bd", "b", "d", DelayPoly((0.0, 1.0, 0.0, 0.0))),
    )
    return Network(
        nodes=("o", "a", "b", "d"),
        links=links,
        od_pairs=(OdSpec("o", "d", 1.0, 0.0),),
        name="diamond",
    )
