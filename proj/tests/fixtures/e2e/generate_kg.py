"""Writes the synthetic film/people graph used by the replay pipeline test.

Run once; kg.tsv and types.tsv are committed. rules.tsv was cut from
`kgx mine` output over this graph plus two hand-written constant rules.
"""
import random

rng = random.Random(7)
first = ["Ada", "Bruno", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas",
         "Kira", "Luis", "Mara", "Nils", "Olga", "Pavel", "Quinn", "Rosa", "Sven", "Tala"]
last = ["Rowe", "Ilyin", "Moreau", "Sato", "Varga", "Okafor", "Lind", "Costa", "Berg", "Hale"]
people = sorted({f"{rng.choice(first)} {rng.choice(last)}" for _ in range(60)})[:40]
countries = ["Soviet Union", "France", "Japan", "Brazil", "Sweden"]
cities = {"Moscow": "Soviet Union", "Paris": "France", "Lyon": "France", "Tokyo": "Japan",
          "Rio de Janeiro": "Brazil", "Stockholm": "Sweden"}
films = [f"Film {i:02d}" for i in range(30)]

facts = set()
types = set()
nationality = {}
for p in people:
    city = rng.choice(sorted(cities))
    nationality[p] = cities[city] if rng.random() < 0.85 else rng.choice(countries)
    facts.add((p, "/people/person/place_of_birth", city))
    facts.add((p, "/people/person/nationality", nationality[p]))
    types.add((p, "/people/person"))
for c, country in cities.items():
    facts.add((c, "/location/location/containedby", country))
    types.add((c, "/location/citytown"))
    types.add((c, "/location/location"))
for c in countries:
    types.add((c, "/location/country"))
    types.add((c, "/location/location"))
for i in range(0, len(people) - 1, 2):
    a, b = people[i], people[i + 1]
    facts.add((a, "/people/person/spouse_s", b))
    if rng.random() < 0.8:
        facts.add((b, "/people/person/spouse_s", a))
directors = people[:12]
for f in films:
    d = rng.choice(directors)
    facts.add((f, "/film/film/directed_by", d))
    facts.add((d, "/film/director/film", f))
    if rng.random() < 0.8:
        facts.add((f, "/film/film/country", nationality[d]))
    if rng.random() < 0.6:
        facts.add((f, "/film/film/written_by", d))
    region = nationality[d] if rng.random() < 0.7 else rng.choice(countries)
    facts.add((f, "/film/film/release_date_s-/film/film_regional_release_date/film_release_region",
               region))
    types.add((f, "/film/film"))
for d in directors:
    types.add((d, "/film/director"))

with open("kg.tsv", "w") as out:
    for s, p, o in sorted(facts):
        out.write(f"{s}\t{p}\t{o}\n")
with open("types.tsv", "w") as out:
    for e, t in sorted(types):
        out.write(f"{e}\t{t}\n")
