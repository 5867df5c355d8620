#!/usr/bin/env python3
"""Regenerates the synthetic dataset fixtures and their expected outputs.

The expected files are computed here, independently of the Rust ingestion
code, so the golden tests compare two implementations.
"""

import csv
import io
import os
import random
from datetime import datetime, timedelta

HERE = os.path.dirname(os.path.abspath(__file__))


def zipf_choice(rng, items, s=1.1):
    weights = [1.0 / (i + 1) ** s for i in range(len(items))]
    return rng.choices(items, weights)[0]


def brightkite():
    rng = random.Random(20240611)
    # (user id, distinct locations, check-ins). Users 4 and 7 fall under the
    # 2k = 20 distinct-location threshold and are dropped.
    users = [(0, 42, 360), (1, 28, 300), (4, 12, 80), (9, 55, 420),
             (13, 31, 260), (7, 19, 150), (21, 24, 220), (30, 60, 400)]
    pool = ["%032x" % rng.getrandbits(128) for _ in range(150)]
    lines = []
    expected = []
    for uid, distinct, count in users:
        locs = rng.sample(pool, distinct)
        # Every location at least once, then Zipf repeats with short bursts.
        seq = list(locs)
        while len(seq) < count:
            if seq and rng.random() < 0.3:
                seq.append(rng.choice(seq[-5:]))
            else:
                seq.append(zipf_choice(rng, locs))
        t = datetime(2009, 1, 1) + timedelta(hours=rng.randrange(1000))
        stamped = []
        for loc in seq:
            t += timedelta(minutes=rng.randrange(1, 3000))
            stamped.append((t.strftime("%Y-%m-%dT%H:%M:%SZ"), loc))
        # One timestamp tie per user: same time, file order decides.
        stamped[5] = (stamped[4][0], stamped[5][1])
        rows = []
        for ts, loc in stamped:
            lat = "%.6f" % rng.uniform(-60, 60)
            lon = "%.6f" % rng.uniform(-180, 180)
            rows.append("\t".join([str(uid), ts, lat, lon, loc]))
        # The dump lists each user's check-ins newest first.
        rows.reverse()
        lines.extend(rows)
        # Stable sort of the file order by timestamp string.
        ordered = sorted(reversed(stamped), key=lambda r: r[0])
        if distinct >= 20:
            expected.append("%d\t%s" % (uid, " ".join(loc for _, loc in ordered)))
    with open(os.path.join(HERE, "brightkite_sample.tsv"), "w") as f:
        f.write("\n".join(lines) + "\n")
    with open(os.path.join(HERE, "brightkite_expected.txt"), "w") as f:
        f.write("\n".join(expected) + "\n")


CITI_HEADER = ["tripduration", "starttime", "stoptime", "start station id", "start station name",
               "start station latitude", "start station longitude", "end station id",
               "end station name", "end station latitude", "end station longitude", "bikeid",
               "usertype", "birth year", "gender"]


def citi_stations(rng, n):
    streets = ["W 52 St", "E 17 St", "Broadway", "Atlantic Ave", "Bedford Ave", "Pershing Square",
               "Lafayette St", "Grand St", "8 Ave", "Christopher St", "Hudson St", "Clinton St"]
    out = []
    ids = rng.sample(range(72, 3700), n)
    for i, sid in enumerate(ids):
        a, b = rng.sample(streets, 2)
        name = "%s & %s" % (a, b)
        if i % 7 == 0:
            name += ", North"
        out.append((str(sid), name, 40.6 + rng.random() * 0.2, -74.05 + rng.random() * 0.15))
    return out


def citi_rows(rng, stations, count):
    t = datetime(2018, 6, 1, 0, 0, 1)
    rows = []
    for _ in range(count):
        t += timedelta(seconds=rng.randrange(1, 90))
        s = zipf_choice(rng, stations, 0.9)
        e = rng.choice(stations)
        dur = rng.randrange(60, 3600)
        rows.append([str(dur), t.strftime("%Y-%m-%d %H:%M:%S.0000"),
                     (t + timedelta(seconds=dur)).strftime("%Y-%m-%d %H:%M:%S.0000"),
                     s[0], s[1], "%.8f" % s[2], "%.8f" % s[3], e[0], e[1], "%.8f" % e[2],
                     "%.8f" % e[3], str(rng.randrange(14529, 33000)),
                     rng.choice(["Subscriber", "Customer"]), str(rng.randrange(1950, 2001)),
                     str(rng.randrange(3))])
    return rows


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, quoting=csv.QUOTE_ALL, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    with open(path, "w") as f:
        f.write(buf.getvalue())


def citi():
    rng = random.Random(77)
    stations = citi_stations(rng, 40)
    rows = citi_rows(rng, stations, 100)
    write_csv(os.path.join(HERE, "citi_sample.csv"), CITI_HEADER, rows)
    with open(os.path.join(HERE, "citi_expected.txt"), "w") as f:
        f.write("\n".join(r[3] for r in rows) + "\n")

    # Larger month slice for k = 100 runs.
    stations = citi_stations(rng, 260)
    rows = citi_rows(rng, stations, 3000)
    keep = [0, 1, 3, 7]
    write_csv(os.path.join(HERE, "citi_month.csv"), [CITI_HEADER[i] for i in keep],
              [[r[i] for i in keep] for r in rows])


def plain():
    with open(os.path.join(HERE, "small.txt"), "w") as f:
        f.write("# ten requests over four pages\n")
        f.write("\n".join("a b c a b c d a d b".split()) + "\n")


if __name__ == "__main__":
    brightkite()
    citi()
    plain()
