#!/usr/bin/env python3
"""Generate the face-consistent marching-cubes table used by surface_extract.hpp.

Corner c sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1). Edges 0-3 run along x,
4-7 along y, 8-11 along z. Corners with a set bit in the case index are
interior (negative). On a face whose two interior corners are diagonal the
interior corners are kept separate, so two cubes sharing that face always
agree on the isoline. Loops are triangulated without any diagonal whose two
endpoints lie on a common cube face, so no interior edge can be shared with a
neighbouring cube. Triangles are wound with normals pointing to the exterior.

Usage: gen_mc_table.py > include/sparcubes/mc_table.hpp
"""
import itertools
import sys

EDGES = []
for axis in range(3):
    bit = 1 << axis
    for c in range(8):
        if not c & bit:
            EDGES.append((c, c | bit))
# Order: x edges first (lower corner ascending), then y, then z.
EDGES = sorted(EDGES, key=lambda e: ((e[1] - e[0]).bit_length() - 1, e[0]))
EDGE_INDEX = {e: i for i, e in enumerate(EDGES)}


def corner_pos(c):
    return (c & 1, (c >> 1) & 1, (c >> 2) & 1)


def edge_mid(e):
    a, b = EDGES[e]
    pa, pb = corner_pos(a), corner_pos(b)
    return tuple((x + y) / 2 for x, y in zip(pa, pb))


# Faces: (axis, value) -> corners in cyclic order.
FACES = []
for axis in range(3):
    for val in range(2):
        cs = [c for c in range(8) if ((c >> axis) & 1) == val]
        u, v = [a for a in range(3) if a != axis]
        def key(c):
            return ((c >> u) & 1, (c >> v) & 1)
        order = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}
        cs.sort(key=lambda c: order[key(c)])
        FACES.append(cs)


def edge_of(a, b):
    return EDGE_INDEX[(min(a, b), max(a, b))]


def faces_of_edge(e):
    a, b = EDGES[e]
    return {fi for fi, cs in enumerate(FACES) if a in cs and b in cs}


def sub(p, q):
    return tuple(x - y for x, y in zip(p, q))


def cross(p, q):
    return (p[1] * q[2] - p[2] * q[1], p[2] * q[0] - p[0] * q[2], p[0] * q[1] - p[1] * q[0])


def dot(p, q):
    return sum(x * y for x, y in zip(p, q))


def face_segments(case):
    segs = []
    ambiguous = False
    for cs in FACES:
        inside = [(case >> c) & 1 for c in cs]
        crossed = [edge_of(cs[i], cs[(i + 1) % 4]) for i in range(4) if inside[i] != inside[(i + 1) % 4]]
        if len(crossed) == 2:
            segs.append(tuple(crossed))
        elif len(crossed) == 4:
            ambiguous = True
            for i in range(4):
                if inside[i]:
                    segs.append((edge_of(cs[i - 1], cs[i]), edge_of(cs[i], cs[(i + 1) % 4])))
    return segs, ambiguous


def loops_for(case):
    segs, amb = face_segments(case)
    adj = {}
    for a, b in segs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for k, v in adj.items():
        assert len(v) == 2, (case, k, v)
    seen = set()
    loops = []
    for start in sorted(adj):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [n for n in adj[cur] if n != prev]
            n = min(nxt) if prev is None else nxt[0]
            if n == start:
                break
            loop.append(n)
            seen.add(n)
            prev, cur = cur, n
        loops.append(loop)
    return loops, amb


def orient(loop, case):
    # Normal at each vertex must point from the interior corner to the exterior one.
    votes = 0
    n = len(loop)
    for i, e in enumerate(loop):
        p = edge_mid(e)
        nx, pv = edge_mid(loop[(i + 1) % n]), edge_mid(loop[i - 1])
        nrm = cross(sub(nx, p), sub(pv, p))
        a, b = EDGES[e]
        ina = (case >> a) & 1
        d = sub(corner_pos(b), corner_pos(a)) if ina else sub(corner_pos(a), corner_pos(b))
        votes += 1 if dot(nrm, d) > 0 else -1
    assert abs(votes) == n, (case, loop, votes)
    return loop if votes > 0 else list(reversed(loop))


def share_face(e1, e2):
    return bool(faces_of_edge(e1) & faces_of_edge(e2))


def triangulate(loop):
    """Deterministic search for a triangulation with no same-face diagonal."""
    n = len(loop)
    if n == 3:
        return [tuple(loop)]
    # Fans first, in loop order.
    for s in range(n):
        rot = loop[s:] + loop[:s]
        if all(not share_face(rot[0], rot[k]) for k in range(2, n - 1)):
            return [(rot[0], rot[k], rot[k + 1]) for k in range(1, n - 1)]

    # General polygon triangulation by recursion on the edge (0, n-1).
    def rec(poly):
        if len(poly) < 3:
            return []
        if len(poly) == 3:
            return [tuple(poly)]
        a, b = poly[0], poly[-1]
        for k in range(1, len(poly) - 1):
            c = poly[k]
            ok = True
            if k > 1 and share_face(a, c):
                ok = False
            if k < len(poly) - 2 and share_face(c, b):
                ok = False
            if not ok:
                continue
            left = rec(poly[: k + 1]) if k > 1 else []
            right = rec(poly[k:]) if k < len(poly) - 2 else []
            if left is None or right is None:
                continue
            return left + [(a, c, b)] + right
        return None

    for s in range(n):
        rot = loop[s:] + loop[:s]
        tri = rec(rot)
        if tri is not None:
            return tri
    raise RuntimeError("no valid triangulation for loop %s" % loop)


def components(corners):
    corners = set(corners)
    comps = 0
    seen = set()
    for c in corners:
        if c in seen:
            continue
        comps += 1
        stack = [c]
        seen.add(c)
        while stack:
            x = stack.pop()
            for axis in range(3):
                y = x ^ (1 << axis)
                if y in corners and y not in seen:
                    seen.add(y)
                    stack.append(y)
    return comps


def main():
    table = []
    ambiguous = []
    maxtri = 0
    for case in range(256):
        loops, face_amb = loops_for(case)
        tris = []
        for loop in loops:
            tris += triangulate(orient(loop, case))
        inside = [c for c in range(8) if (case >> c) & 1]
        outside = [c for c in range(8) if not (case >> c) & 1]
        amb = face_amb or components(inside) > 1 or components(outside) > 1
        table.append(tris)
        ambiguous.append(amb)
        maxtri = max(maxtri, len(tris))
    width = 3 * maxtri + 1
    out = sys.stdout
    out.write("// Generated by tools/gen_mc_table.py. Do not edit.\n")
    out.write("#pragma once\n\n#include <array>\n#include <cstdint>\n\n")
    out.write("namespace sparcubes::mc {\n\n")
    out.write("/// Corner pairs (lower, upper) of the 12 cube edges; corner c = x | y<<1 | z<<2.\n")
    out.write("inline constexpr std::array<std::array<std::uint8_t, 2>, 12> kEdgeCorners{{\n")
    for a, b in EDGES:
        out.write("    {%d, %d},\n" % (a, b))
    out.write("}};\n\n")
    out.write("inline constexpr int kMaxTriangles = %d;\n\n" % maxtri)
    out.write("/// Edge triples per case, -1 terminated. Bit c of the case index set = corner c interior.\n")
    out.write("inline constexpr std::array<std::array<std::int8_t, %d>, 256> kTriTable{{\n" % width)
    for case, tris in enumerate(table):
        flat = [e for t in tris for e in t]
        flat += [-1] * (width - len(flat))
        out.write("    {{%s}},\n" % ", ".join(str(x) for x in flat))
    out.write("}};\n\n")
    out.write("/// Cases with an ambiguous face or disconnected same-sign corners.\n")
    out.write("inline constexpr std::array<bool, 256> kAmbiguousCase{{\n")
    for i in range(0, 256, 16):
        out.write("    %s,\n" % ", ".join("true" if a else "false" for a in ambiguous[i:i + 16]))
    out.write("}};\n\n} // namespace sparcubes::mc\n")
    print("max triangles per case:", maxtri, file=sys.stderr)


if __name__ == "__main__":
    main()
