"""Trip data ingestion, station clustering, and demand estimation.

Trip records carry pickup/dropoff timestamps and lon/lat endpoints.  Station
locations come from k-means over the pooled endpoints; hourly demand
parameters come from counting trips between the fitted stations, with
additive smoothing on the destination rows so every estimated routing matrix
stays irreducible.  Distances use the Manhattan metric on a locally flat
projection whose origin sits at the centroid of the stations.

A synthetic-city generator produces trip files with known ground truth so
the whole estimation path can be checked end to end.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Optional

import numpy as np

from .errors import ValidationError
from .netmodel import Network
from .sim import DemandProfile

KM_PER_DEG_LAT = 110.574
KM_PER_DEG_LON_EQ = 111.320

TRIP_HEADER = ["pickup_datetime", "dropoff_datetime", "pickup_lon",
               "pickup_lat", "dropoff_lon", "dropoff_lat"]

# Stations with no pickups in an hour keep a small positive rate so the
# hourly networks stay well defined.
LAMBDA_FLOOR_PER_HOUR = 0.1


def _parse_rfc3339(text: str) -> datetime:
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def _format_rfc3339(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


@dataclass(frozen=True)
class TripRecord:
    pickup: datetime
    dropoff: datetime
    pickup_lon: float
    pickup_lat: float
    dropoff_lon: float
    dropoff_lat: float

    def __post_init__(self):
        if self.dropoff < self.pickup:
            raise ValidationError("dropoff precedes pickup")


def parse_trips(lines, bbox=None) -> list:
    """Parse a trip CSV; every malformed row is an error with its line number.

    bbox, when given, is (lon_min, lat_min, lon_max, lat_max) and endpoints
    outside it are rejected.
    """
    reader = csv.reader(lines)
    trips = []
    for k, row in enumerate(reader, start=1):
        if not row or (k == 1 and row[0] == TRIP_HEADER[0]):
            continue
        if len(row) != 6:
            raise ValidationError(f"line {k}: expected 6 fields, got {len(row)}")
        try:
            rec = TripRecord(
                pickup=_parse_rfc3339(row[0]),
                dropoff=_parse_rfc3339(row[1]),
                pickup_lon=float(row[2]), pickup_lat=float(row[3]),
                dropoff_lon=float(row[4]), dropoff_lat=float(row[5]),
            )
        except (ValueError, ValidationError) as exc:
            raise ValidationError(f"line {k}: {exc}") from exc
        if bbox is not None:
            for lon, lat in ((rec.pickup_lon, rec.pickup_lat),
                             (rec.dropoff_lon, rec.dropoff_lat)):
                if not (bbox[0] <= lon <= bbox[2] and bbox[1] <= lat <= bbox[3]):
                    raise ValidationError(
                        f"line {k}: endpoint ({lon}, {lat}) outside bounding box"
                    )
        trips.append(rec)
    return trips


def parse_trips_file(path, bbox=None) -> list:
    with open(path, newline="") as fh:
        return parse_trips(fh, bbox=bbox)


class FlatProjection:
    """Equirectangular km plane around a reference point."""

    def __init__(self, origin_lon: float, origin_lat: float):
        self.origin_lon = float(origin_lon)
        self.origin_lat = float(origin_lat)
        self._kx = KM_PER_DEG_LON_EQ * np.cos(np.radians(self.origin_lat))

    def to_xy(self, lon, lat):
        x = (np.asarray(lon) - self.origin_lon) * self._kx
        y = (np.asarray(lat) - self.origin_lat) * KM_PER_DEG_LAT
        return x, y

    def to_lonlat(self, x, y):
        lon = np.asarray(x) / self._kx + self.origin_lon
        lat = np.asarray(y) / KM_PER_DEG_LAT + self.origin_lat
        return lon, lat

    def manhattan_km(self, lon1, lat1, lon2, lat2):
        x1, y1 = self.to_xy(lon1, lat1)
        x2, y2 = self.to_xy(lon2, lat2)
        return np.abs(x1 - x2) + np.abs(y1 - y2)


@dataclass(frozen=True)
class StationClustering:
    """Fitted station centroids plus the assignment of every trip endpoint.

    Walk distances (Manhattan km from an endpoint to its station) are the
    quality diagnostic; the fit itself does not enforce any threshold.
    """

    centroids_lonlat: np.ndarray
    pickup_station: np.ndarray
    dropoff_station: np.ndarray
    walk_km_mean: float
    walk_km_p95: float

    @property
    def n_stations(self) -> int:
        return self.centroids_lonlat.shape[0]


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
            max_iter: int = 300):
    """Plain k-means with the usual distance-squared seeding.

    Converges when assignments stop changing; empty clusters grab the point
    farthest from its current centroid, which keeps the count at k.
    """
    n_pts = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n_pts))
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[c] = points[int(rng.integers(n_pts))]
        else:
            centers[c] = points[int(rng.choice(n_pts, p=d2 / total))]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))

    labels = np.full(n_pts, -1)
    for _ in range(max_iter):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if mask.any():
                centers[c] = points[mask].mean(axis=0)
            else:
                far = int(dists[np.arange(n_pts), labels].argmax())
                centers[c] = points[far]
                labels[far] = c
    return centers, labels


def cluster_stations(trips, n: int, seed: int = 0) -> StationClustering:
    """Fit n stations to the pooled pickup and dropoff endpoints."""
    if not trips:
        raise ValidationError("no trips to cluster")
    pick = np.array([[t.pickup_lon, t.pickup_lat] for t in trips])
    drop = np.array([[t.dropoff_lon, t.dropoff_lat] for t in trips])
    points = np.vstack([pick, drop])
    if np.unique(points, axis=0).shape[0] < n:
        raise ValidationError(
            f"need at least {n} distinct endpoints, got fewer"
        )
    proj = FlatProjection(points[:, 0].mean(), points[:, 1].mean())
    xy = np.column_stack(proj.to_xy(points[:, 0], points[:, 1]))
    rng = np.random.default_rng(seed)
    centers_xy, labels = _kmeans(xy, n, rng)
    lon, lat = proj.to_lonlat(centers_xy[:, 0], centers_xy[:, 1])
    centroids = np.column_stack([lon, lat])

    walk = np.abs(xy - centers_xy[labels]).sum(axis=1)
    n_trips = len(trips)
    return StationClustering(
        centroids_lonlat=centroids,
        pickup_station=labels[:n_trips].astype(np.int64),
        dropoff_station=labels[n_trips:].astype(np.int64),
        walk_km_mean=float(walk.mean()),
        walk_km_p95=float(np.percentile(walk, 95)),
    )


def estimate_profile(trips, clustering: StationClustering,
                     kappa: float = 1.0) -> DemandProfile:
    """Hourly demand parameters from assigned trips.

    Per hour of day: arrival rates are pickup counts (floored at a small
    positive value), destination rows get additive smoothing
    (count_ij + kappa) / (count_i + kappa * (n - 1)), and travel times are
    station Manhattan distances over the mean trip speed of that hour.
    Trips between the same station are dropped from the counts (the model
    has no self trips).  Hours without trips fall back to the all-day
    estimate with a warning.
    """
    if kappa < 0.0:
        raise ValidationError("smoothing must be nonnegative")
    n = clustering.n_stations
    centroids = clustering.centroids_lonlat
    proj = FlatProjection(centroids[:, 0].mean(), centroids[:, 1].mean())
    cx, cy = proj.to_xy(centroids[:, 0], centroids[:, 1])
    dist_km = (np.abs(cx[:, None] - cx[None, :])
               + np.abs(cy[:, None] - cy[None, :]))

    counts = np.zeros((24, n, n))
    speed_sum = np.zeros(24)
    speed_cnt = np.zeros(24)
    dropped_self = 0
    for k, trip in enumerate(trips):
        i = int(clustering.pickup_station[k])
        j = int(clustering.dropoff_station[k])
        h = trip.pickup.astimezone(timezone.utc).hour
        if i == j:
            dropped_self += 1
            continue
        counts[h, i, j] += 1.0
        dur_h = (trip.dropoff - trip.pickup).total_seconds() / 3600.0
        if dur_h > 0.0:
            d = proj.manhattan_km(trip.pickup_lon, trip.pickup_lat,
                                  trip.dropoff_lon, trip.dropoff_lat)
            speed_sum[h] += float(d) / dur_h
            speed_cnt[h] += 1.0
    if dropped_self:
        warnings.warn(f"dropped {dropped_self} same-station trips",
                      stacklevel=2)

    day_counts = counts.sum(axis=0)
    day_speed = speed_sum.sum() / max(speed_cnt.sum(), 1.0)
    if day_counts.sum() == 0 or day_speed <= 0.0:
        raise ValidationError("no usable trips for estimation")

    def slice_from(counts_h, speed_h):
        pickups = counts_h.sum(axis=1)
        lam = np.maximum(pickups, LAMBDA_FLOOR_PER_HOUR)
        denom = pickups + kappa * (n - 1)
        routing = (counts_h + kappa) / denom[:, None]
        np.fill_diagonal(routing, 0.0)
        # rows renormalize exactly only when kappa > 0; kappa = 0 rows with
        # no observations would be all-zero and fail network validation
        t_hours = dist_km / speed_h
        return Network(lam=lam, P=routing, T=t_hours)

    slices = []
    speeds = []
    empty_hours = []
    for h in range(24):
        if counts[h].sum() == 0:
            empty_hours.append(h)
            speed_h = day_speed
            slices.append(slice_from(day_counts / 24.0, speed_h))
        else:
            speed_h = (speed_sum[h] / speed_cnt[h]
                       if speed_cnt[h] > 0 else day_speed)
            slices.append(slice_from(counts[h], speed_h))
        speeds.append(speed_h)
    if empty_hours:
        warnings.warn(
            f"hours {empty_hours} had no trips; used all-day estimates",
            stacklevel=2,
        )
    coords = tuple((float(c[0]), float(c[1])) for c in centroids)
    return DemandProfile(slices=tuple(slices), speeds_kmh=tuple(speeds),
                         station_coords=coords)


@dataclass(frozen=True)
class SynthSpec:
    """Ground truth for the synthetic trip generator.

    centers_lonlat : blob centers, one per station.
    rates          : (24, n) Poisson trip counts per station-hour.
    routing        : destination matrix shared by all hours.
    speeds_kmh     : (24,) mean speed per hour.
    sigma_km       : endpoint scatter around the blob centers.
    start          : first pickup day (UTC midnight), RFC 3339 date.
    """

    centers_lonlat: np.ndarray
    rates: np.ndarray
    routing: np.ndarray
    speeds_kmh: np.ndarray
    sigma_km: float = 0.05
    start: str = "2024-06-03"

    def __post_init__(self):
        centers = np.asarray(self.centers_lonlat, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        routing = np.asarray(self.routing, dtype=float)
        speeds = np.asarray(self.speeds_kmh, dtype=float)
        n = centers.shape[0]
        if rates.ndim == 1:
            rates = np.tile(rates, (24, 1))
        if rates.shape != (24, n) or routing.shape != (n, n):
            raise ValidationError("synthetic spec arrays have bad shapes")
        if speeds.ndim == 0:
            speeds = np.full(24, float(speeds))
        if speeds.shape != (24,) or np.any(speeds <= 0):
            raise ValidationError("need 24 positive hourly speeds")
        if np.any(rates < 0):
            raise ValidationError("rates must be nonnegative")
        object.__setattr__(self, "centers_lonlat", centers)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "routing", routing)
        object.__setattr__(self, "speeds_kmh", speeds)

    @property
    def n_stations(self) -> int:
        return self.centers_lonlat.shape[0]

    @classmethod
    def demo(cls, n: int = 5, rate_per_hour: float = 60.0) -> "SynthSpec":
        """Ring of stations ~2 km apart with a morning/evening rate bump."""
        angles = 2.0 * np.pi * np.arange(n) / n
        base_lon, base_lat = -73.98, 40.75
        lon = base_lon + 0.02 * np.cos(angles)
        lat = base_lat + 0.015 * np.sin(angles)
        shape = 1.0 + 0.5 * np.sin(2.0 * np.pi * (np.arange(24) - 7) / 24.0)
        rates = rate_per_hour * shape[:, None] * np.ones((1, n))
        routing = np.full((n, n), 1.0 / (n - 1))
        np.fill_diagonal(routing, 0.0)
        speeds = np.full(24, 25.0)
        return cls(centers_lonlat=np.column_stack([lon, lat]), rates=rates,
                   routing=routing, speeds_kmh=speeds)

    def ground_truth_json(self) -> dict:
        return {
            "schema": 1,
            "centers": self.centers_lonlat.tolist(),
            "lambda_per_hour": self.rates.tolist(),
            "P": self.routing.tolist(),
            "speed_kmh": self.speeds_kmh.tolist(),
            "sigma_km": self.sigma_km,
        }


def generate_synthetic_city(spec: SynthSpec, seed: int = 0) -> str:
    """Trip CSV with Poisson counts per station-hour and known routing.

    Endpoints scatter around the blob centers; the dropoff time makes every
    trip's Manhattan speed equal the hour's ground-truth speed exactly.
    Output is sorted by pickup time and is byte-identical for a fixed seed.
    """
    n = spec.n_stations
    start = datetime.fromisoformat(spec.start).replace(tzinfo=timezone.utc)
    root = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in root.spawn(n)]
    centers = spec.centers_lonlat
    proj = FlatProjection(centers[:, 0].mean(), centers[:, 1].mean())
    cx, cy = proj.to_xy(centers[:, 0], centers[:, 1])

    rows = []
    for h in range(24):
        speed = spec.speeds_kmh[h]
        for i in range(n):
            count = int(rngs[i].poisson(spec.rates[h, i]))
            if count == 0:
                continue
            offsets = rngs[i].uniform(0.0, 3600.0, size=count)
            dests = rngs[i].choice(n, size=count, p=spec.routing[i])
            noise = rngs[i].normal(0.0, spec.sigma_km, size=(count, 4))
            for k in range(count):
                j = int(dests[k])
                px, py = cx[i] + noise[k, 0], cy[i] + noise[k, 1]
                dx, dy = cx[j] + noise[k, 2], cy[j] + noise[k, 3]
                dist = abs(px - dx) + abs(py - dy)
                dur_s = dist / speed * 3600.0
                t_pick = start + timedelta(hours=h, seconds=float(offsets[k]))
                t_drop = t_pick + timedelta(seconds=dur_s)
                plon, plat = proj.to_lonlat(px, py)
                dlon, dlat = proj.to_lonlat(dx, dy)
                rows.append((t_pick, t_drop, float(plon), float(plat),
                             float(dlon), float(dlat)))
    rows.sort(key=lambda r: (r[0], r[2], r[3]))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIP_HEADER)
    for t_pick, t_drop, plon, plat, dlon, dlat in rows:
        w.writerow([
            _format_rfc3339(t_pick), _format_rfc3339(t_drop),
            f"{plon:.6f}", f"{plat:.6f}", f"{dlon:.6f}", f"{dlat:.6f}",
        ])
    return buf.getvalue()


def save_profile(profile: DemandProfile, path) -> None:
    doc = {
        "schema": 1,
        "stations": [list(c) for c in profile.station_coords],
        "speeds_kmh": list(profile.speeds_kmh),
        "hours": [
            {"lambda": s.lam.tolist(), "P": s.P.tolist(), "T": s.T.tolist()}
            for s in profile.slices
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_profile(path) -> DemandProfile:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != 1:
        raise ValidationError(f"unsupported profile schema {doc.get('schema')!r}")
    slices = tuple(
        Network(lam=np.asarray(h["lambda"]), P=np.asarray(h["P"]),
                T=np.asarray(h["T"]))
        for h in doc["hours"]
    )
    return DemandProfile(
        slices=slices,
        speeds_kmh=tuple(doc.get("speeds_kmh", ())),
        station_coords=tuple(tuple(c) for c in doc.get("stations", ())),
    )
