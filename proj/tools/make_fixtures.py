#!/usr/bin/env python3
"""Writes the bundled fixtures under data/. Deterministic; rerun after edits."""
import json
import os

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def schema(db_id, tables, fks, pks):
    names, cols, types = [], [[-1, "*"]], ["text"]
    index = {}
    for ti, (tname, columns) in enumerate(tables):
        names.append(tname)
        for cname, ctype in columns:
            index[(tname, cname)] = len(cols)
            cols.append([ti, cname])
            types.append(ctype)
    return {
        "db_id": db_id,
        "table_names": [n.replace("_", " ") for n in names],
        "table_names_original": names,
        "column_names": [[t, c.replace("_", " ")] for t, c in cols],
        "column_names_original": cols,
        "column_types": types,
        "primary_keys": [index[k] for k in pks],
        "foreign_keys": [[index[a], index[b]] for a, b in fks],
    }


CONCERT = schema(
    "concert_singer",
    [
        ("stadium", [("stadium_id", "number"), ("name", "text"), ("location", "text"), ("capacity", "number")]),
        ("singer", [("singer_id", "number"), ("name", "text"), ("country", "text"), ("age", "number")]),
        ("concert", [("concert_id", "number"), ("concert_name", "text"), ("year", "number"), ("stadium_id", "number")]),
        ("singer_in_concert", [("concert_id", "number"), ("singer_id", "number")]),
    ],
    [
        (("concert", "stadium_id"), ("stadium", "stadium_id")),
        (("singer_in_concert", "concert_id"), ("concert", "concert_id")),
        (("singer_in_concert", "singer_id"), ("singer", "singer_id")),
    ],
    [("stadium", "stadium_id"), ("singer", "singer_id"), ("concert", "concert_id")],
)

EMPLOYEE = schema(
    "employee_hire",
    [
        ("employee", [("employee_id", "number"), ("name", "text"), ("age", "number"), ("city", "text")]),
        ("shop", [("shop_id", "number"), ("name", "text"), ("location", "text"), ("district", "text")]),
        ("hiring", [("shop_id", "number"), ("employee_id", "number"), ("start_from", "text"),
                    ("is_full_time", "others")]),
    ],
    [
        (("hiring", "shop_id"), ("shop", "shop_id")),
        (("hiring", "employee_id"), ("employee", "employee_id")),
    ],
    [("employee", "employee_id"), ("shop", "shop_id")],
)

CS, EH = "concert_singer", "employee_hire"
SHOP_HIRING = "shop JOIN hiring ON shop.shop_id = hiring.shop_id"

# (db, [(utterance, sql, self_contained)]); self_contained None means the
# utterance already stands alone.
TRAIN = [
    (CS, [("how many singers do we have", "SELECT count(*) FROM singer", None)]),
    (CS, [("list the names of all stadiums", "SELECT name FROM stadium", None)]),
    (EH, [("what is the average age of employees", "SELECT avg(age) FROM employee", None)]),
    (EH, [("show the district of every shop", "SELECT district FROM shop", None)]),
    (CS, [("show the maximum capacity of stadiums", "SELECT max(capacity) FROM stadium", None)]),
    (CS, [
        ("show all singer names", "SELECT name FROM singer", None),
        ("only those older than 30", "SELECT name FROM singer WHERE age > 30",
         "show names of singers older than 30"),
    ]),
    (CS, [
        ("list all concert names", "SELECT concert_name FROM concert", None),
        ("sort them by year descending", "SELECT concert_name FROM concert ORDER BY year DESC",
         "list concert names sorted by year descending"),
    ]),
    (EH, [
        ("show the names of employees", "SELECT name FROM employee", None),
        ("which ones live in bristol", "SELECT name FROM employee WHERE city = 'Bristol'",
         "show the names of employees living in bristol"),
    ]),
    (EH, [
        ("list every shop location", "SELECT location FROM shop", None),
        ("how many shops are there in each district", "SELECT district, count(*) FROM shop GROUP BY district", None),
    ]),
    (CS, [
        ("show the distinct countries of singers", "SELECT DISTINCT country FROM singer", None),
        ("count the singers for each of them", "SELECT country, count(*) FROM singer GROUP BY country",
         "count the singers for each country"),
    ]),
    (CS, [
        ("show stadium names and capacities", "SELECT name, capacity FROM stadium", None),
        ("which one has the largest capacity", "SELECT name FROM stadium ORDER BY capacity DESC LIMIT 1",
         "which stadium has the largest capacity"),
        ("what is its location", "SELECT location FROM stadium ORDER BY capacity DESC LIMIT 1",
         "what is the location of the stadium with the largest capacity"),
    ]),
    (CS, [
        ("list concerts held in 2014", "SELECT concert_name FROM concert WHERE year = 2014", None),
        ("also show their stadium names",
         "SELECT concert.concert_name, stadium.name FROM concert JOIN stadium "
         "ON concert.stadium_id = stadium.stadium_id WHERE concert.year = 2014",
         "list concerts held in 2014 and their stadium names"),
        ("how many are there", "SELECT count(*) FROM concert WHERE year = 2014",
         "how many concerts were held in 2014"),
    ]),
    (EH, [
        ("show employee names and ages", "SELECT name, age FROM employee", None),
        ("who is the oldest", "SELECT name FROM employee ORDER BY age DESC LIMIT 1", "who is the oldest employee"),
        ("and the youngest", "SELECT name FROM employee ORDER BY age ASC LIMIT 1", "who is the youngest employee"),
    ]),
    (EH, [
        ("list the shops", "SELECT name FROM shop", None),
        ("which of them hired full time employees",
         f"SELECT shop.name FROM {SHOP_HIRING} WHERE hiring.is_full_time = 'T'",
         "which shops hired full time employees"),
        ("count them", f"SELECT count(*) FROM {SHOP_HIRING} WHERE hiring.is_full_time = 'T'",
         "count the shops that hired full time employees"),
    ]),
    (CS, [
        ("show singers from the united states", "SELECT name FROM singer WHERE country = 'United States'", None),
        ("what are their ages", "SELECT age FROM singer WHERE country = 'United States'",
         "what are the ages of singers from the united states"),
        ("what is the average", "SELECT avg(age) FROM singer WHERE country = 'United States'",
         "what is the average age of singers from the united states"),
    ]),
    (CS, [
        ("show all stadiums", "SELECT name FROM stadium", None),
        ("which have capacity above 5000", "SELECT name FROM stadium WHERE capacity > 5000",
         "show stadiums with capacity above 5000"),
        ("and are located in london", "SELECT name FROM stadium WHERE capacity > 5000 AND location = 'London'",
         "show stadiums with capacity above 5000 located in london"),
        ("how many", "SELECT count(*) FROM stadium WHERE capacity > 5000 AND location = 'London'",
         "how many stadiums with capacity above 5000 are located in london"),
    ]),
    (CS, [
        ("list the singers", "SELECT name FROM singer", None),
        ("which ones performed in a concert",
         "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)",
         "which singers performed in a concert"),
        ("which did not",
         "SELECT name FROM singer WHERE singer_id NOT IN (SELECT singer_id FROM singer_in_concert)",
         "which singers did not perform in any concert"),
        ("show their countries",
         "SELECT country FROM singer WHERE singer_id NOT IN (SELECT singer_id FROM singer_in_concert)",
         "show the countries of singers who did not perform in any concert"),
    ]),
    (EH, [
        ("show employee cities", "SELECT city FROM employee", None),
        ("count employees in each city", "SELECT city, count(*) FROM employee GROUP BY city", None),
        ("only cities with more than one employee",
         "SELECT city FROM employee GROUP BY city HAVING count(*) > 1",
         "show cities with more than one employee"),
        ("order them by the count",
         "SELECT city FROM employee GROUP BY city HAVING count(*) > 1 ORDER BY count(*) DESC",
         "show cities with more than one employee ordered by the number of employees"),
    ]),
    (EH, [
        ("list the shop names", "SELECT name FROM shop", None),
        ("and their locations", "SELECT name, location FROM shop", "list the shop names and locations"),
        ("only those in the north district", "SELECT name, location FROM shop WHERE district = 'North'",
         "list names and locations of shops in the north district"),
        ("which of these shops have hired someone",
         f"SELECT name FROM shop WHERE district = 'North' INTERSECT SELECT shop.name FROM {SHOP_HIRING}",
         "which shops in the north district have hired someone"),
    ]),
    (CS, [
        ("show concert years", "SELECT year FROM concert", None),
        ("what is the earliest", "SELECT min(year) FROM concert", "what is the earliest concert year"),
        ("show the concert names in that year",
         "SELECT concert_name FROM concert WHERE year = (SELECT min(year) FROM concert)",
         "show the names of concerts in the earliest year"),
        ("and the latest year instead",
         "SELECT concert_name FROM concert WHERE year = (SELECT max(year) FROM concert)",
         "show the names of concerts in the latest year"),
    ]),
]

EXTRA = [
    (CS, [("list the locations of all stadiums", "SELECT location FROM stadium", None)]),
    (EH, [
        ("show all employee names", "SELECT name FROM employee", None),
        ("which are younger than 30", "SELECT name FROM employee WHERE age < 30",
         "show names of employees younger than 30"),
    ]),
    (CS, [
        ("show singer names and ages", "SELECT name, age FROM singer", None),
        ("who is the youngest", "SELECT name FROM singer ORDER BY age ASC LIMIT 1", "who is the youngest singer"),
        ("and the oldest", "SELECT name FROM singer ORDER BY age DESC LIMIT 1", "who is the oldest singer"),
    ]),
    (EH, [
        ("list shop districts", "SELECT district FROM shop", None),
        ("how many shops are in each", "SELECT district, count(*) FROM shop GROUP BY district",
         "how many shops are in each district"),
        ("show districts with more than one shop",
         "SELECT district FROM shop GROUP BY district HAVING count(*) > 1", None),
        ("how many distinct districts are there", "SELECT count(DISTINCT district) FROM shop", None),
    ]),
]


def interactions(rows, with_self_contained):
    out = []
    for db, turns in rows:
        items = []
        for utt, sql, sc in turns:
            t = {"utterance": utt, "query": sql}
            if with_self_contained:
                t["self_contained"] = sc if sc is not None else utt
            items.append(t)
        out.append({"database_id": db, "interaction": items})
    return out


# (interaction_index, turn_index) into the CQR dataset; 0-based.
SEED = [(5, 1), (6, 1), (7, 1), (9, 1), (10, 1), (10, 2), (12, 1), (15, 1), (16, 1), (19, 1)]

ROUNDTRIP = [
    (CS, "SELECT name FROM singer"),
    (CS, "select Name from Singer"),
    (CS, "SELECT count(*) FROM singer"),
    (CS, "SELECT DISTINCT country FROM singer"),
    (CS, "SELECT name, country, age FROM singer ORDER BY age DESC"),
    (CS, "SELECT avg(age), min(age), max(age) FROM singer WHERE country = 'France'"),
    (CS, "SELECT name FROM singer WHERE age > 30 AND country = 'France'"),
    (CS, "SELECT name FROM singer WHERE age < 20 OR age > 40"),
    (CS, "SELECT name FROM singer WHERE age BETWEEN 20 AND 30"),
    (CS, "SELECT name FROM singer WHERE name LIKE '%Joe%'"),
    (CS, "SELECT name FROM singer WHERE country NOT LIKE 'F%'"),
    (CS, "SELECT name FROM singer WHERE age != 25"),
    (CS, "SELECT name FROM singer WHERE age >= 25 AND age <= 35"),
    (CS, "SELECT country, count(*) FROM singer GROUP BY country"),
    (CS, "SELECT country FROM singer GROUP BY country HAVING count(*) > 2"),
    (CS, "SELECT country, avg(age) FROM singer GROUP BY country HAVING avg(age) > 30 ORDER BY avg(age) DESC"),
    (CS, "SELECT name FROM singer ORDER BY age DESC LIMIT 1"),
    (CS, "SELECT name, age FROM singer ORDER BY age ASC LIMIT 3"),
    (CS, "SELECT name FROM singer ORDER BY age"),
    (CS, "SELECT count(DISTINCT country) FROM singer"),
    (CS, "SELECT sum(capacity) FROM stadium"),
    (CS, "SELECT location, name FROM stadium WHERE capacity BETWEEN 5000 AND 10000"),
    (CS, "SELECT name FROM stadium WHERE capacity > (SELECT avg(capacity) FROM stadium)"),
    (CS, "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)"),
    (CS, "SELECT name FROM singer WHERE singer_id NOT IN (SELECT singer_id FROM singer_in_concert)"),
    (CS, "SELECT concert_name FROM concert WHERE year = (SELECT max(year) FROM concert)"),
    (CS, "SELECT T2.name, T1.concert_name FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id"),
    (CS, "SELECT stadium.name, count(*) FROM concert JOIN stadium ON concert.stadium_id = stadium.stadium_id "
         "GROUP BY stadium.name"),
    (CS, "SELECT T2.name FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id "
         "WHERE T1.year = 2014 ORDER BY T2.capacity DESC LIMIT 1"),
    (CS, "SELECT singer.name FROM singer JOIN singer_in_concert ON singer.singer_id = singer_in_concert.singer_id "
         "JOIN concert ON singer_in_concert.concert_id = concert.concert_id WHERE concert.year = 2014"),
    (CS, "SELECT T3.concert_name, count(*) FROM singer_in_concert AS T1 JOIN concert AS T3 "
         "ON T1.concert_id = T3.concert_id GROUP BY T3.concert_name ORDER BY count(*) DESC"),
    (CS, "SELECT name FROM stadium, concert WHERE stadium.stadium_id = concert.stadium_id AND concert.year > 2013"),
    (CS, "SELECT name FROM singer WHERE country = 'France' INTERSECT SELECT name FROM singer WHERE age > 30"),
    (CS, "SELECT name FROM singer WHERE country = 'France' UNION SELECT name FROM singer WHERE country = 'Spain'"),
    (CS, "SELECT name FROM stadium EXCEPT SELECT T2.name FROM concert AS T1 JOIN stadium AS T2 "
         "ON T1.stadium_id = T2.stadium_id"),
    (CS, "SELECT country FROM singer WHERE age > 40 INTERSECT SELECT country FROM singer WHERE age < 30"),
    (CS, "SELECT name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concert WHERE year = 2014)"),
    (CS, "SELECT max(capacity), avg(capacity) FROM stadium WHERE location = 'London'"),
    (CS, "SELECT year, count(*) FROM concert GROUP BY year HAVING count(*) >= 2 ORDER BY year ASC"),
    (CS, "SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer) ORDER BY age DESC LIMIT 5"),
    (CS, "SELECT DISTINCT location FROM stadium ORDER BY location"),
    (EH, "SELECT name FROM employee"),
    (EH, "SELECT count(*) FROM employee WHERE age > 30"),
    (EH, "SELECT city, count(*) FROM employee GROUP BY city"),
    (EH, "SELECT city FROM employee GROUP BY city HAVING count(*) > 1"),
    (EH, "SELECT name FROM employee ORDER BY age ASC LIMIT 1"),
    (EH, "SELECT district, location FROM shop WHERE district = 'North' OR district = 'South'"),
    (EH, "SELECT T1.name FROM shop AS T1 JOIN hiring AS T2 ON T1.shop_id = T2.shop_id WHERE T2.is_full_time = 'T'"),
    (EH, "SELECT T1.name, count(*) FROM employee AS T1 JOIN hiring AS T2 ON T1.employee_id = T2.employee_id "
         "GROUP BY T1.name"),
    (EH, "SELECT employee.name, shop.name FROM employee JOIN hiring ON employee.employee_id = hiring.employee_id "
         "JOIN shop ON hiring.shop_id = shop.shop_id"),
    (EH, "SELECT name FROM employee WHERE employee_id NOT IN (SELECT employee_id FROM hiring)"),
    (EH, "SELECT name FROM shop WHERE shop_id IN (SELECT shop_id FROM hiring WHERE is_full_time = 'T')"),
    (EH, "SELECT name FROM employee WHERE city = 'Bristol' EXCEPT SELECT name FROM employee WHERE age < 25"),
    (EH, "SELECT district FROM shop UNION SELECT location FROM shop"),
    (EH, "SELECT count(DISTINCT district) FROM shop"),
    (EH, "SELECT avg(age) FROM employee WHERE city LIKE 'B%' AND age BETWEEN 20 AND 40"),
    (EH, "select T1.NAME from SHOP as t1 join HIRING as t2 on t1.SHOP_ID = t2.SHOP_ID "
         "group by T1.name order by COUNT(*) desc limit 1"),
]

# (interaction, turn, db, pred, gold, match) with matches labelled by hand.
EXACT = [
    (0, 1, CS, "SELECT name FROM singer", "SELECT name FROM singer", True),
    (0, 2, CS, "SELECT name, age FROM singer", "SELECT age, name FROM singer", True),
    (0, 3, CS, "SELECT name FROM singer WHERE age > 30", "SELECT name FROM singer WHERE age >= 30", False),
    (1, 1, CS, "SELECT count(*) FROM singer", "select COUNT(*) from SINGER", True),
    (1, 2, CS, "SELECT name FROM singer WHERE country = 'France'", "SELECT name FROM singer WHERE country = 'Spain'",
     True),
    (2, 1, CS, "SELECT name FROM singer WHERE age > 30 AND country = 'France'",
     "SELECT name FROM singer WHERE country = 'France' AND age > 30", True),
    (2, 2, CS, "SELECT name FROM singer WHERE age > 30 AND country = 'France'",
     "SELECT name FROM singer WHERE age > 30 OR country = 'France'", False),
    (2, 3, CS, "SELECT DISTINCT country FROM singer", "SELECT country FROM singer", False),
    (3, 1, CS, "SELECT name FROM singer ORDER BY age DESC", "SELECT name FROM singer ORDER BY age ASC", False),
    (3, 2, CS, "SELECT name FROM singer ORDER BY age DESC LIMIT 1", "SELECT name FROM singer ORDER BY age DESC",
     False),
    (3, 3, CS, "SELECT name FROM singer ORDER BY age DESC LIMIT 1", "SELECT name FROM singer ORDER BY age DESC LIMIT 3",
     True),
    (3, 4, CS, "SELECT name FROM singer ORDER BY age", "SELECT name FROM singer ORDER BY age ASC", True),
    (4, 1, CS, "SELECT country, count(*) FROM singer GROUP BY country",
     "SELECT count(*), country FROM singer GROUP BY country", True),
    (4, 2, CS, "SELECT country FROM singer GROUP BY country HAVING count(*) > 2",
     "SELECT country FROM singer GROUP BY country", False),
    (5, 1, CS, "SELECT T2.name FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id",
     "SELECT stadium.name FROM stadium JOIN concert ON stadium.stadium_id = concert.stadium_id", True),
    (5, 2, CS, "SELECT name FROM stadium", "SELECT location FROM stadium", False),
    (5, 3, CS, "SELECT max(capacity) FROM stadium", "SELECT min(capacity) FROM stadium", False),
    (6, 1, CS, "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)",
     "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)", True),
    (6, 2, CS, "SELECT name FROM singer WHERE singer_id IN (SELECT singer_id FROM singer_in_concert)",
     "SELECT name FROM singer WHERE singer_id NOT IN (SELECT singer_id FROM singer_in_concert)", False),
    (7, 1, CS, "SELECT name FROM singer WHERE country = 'France' UNION SELECT name FROM singer WHERE age > 30",
     "SELECT name FROM singer WHERE country = 'France' UNION SELECT name FROM singer WHERE age > 30", True),
    (7, 2, CS, "SELECT name FROM singer WHERE country = 'France' UNION SELECT name FROM singer WHERE age > 30",
     "SELECT name FROM singer WHERE country = 'France' INTERSECT SELECT name FROM singer WHERE age > 30", False),
    (8, 1, CS, "SELECT count(DISTINCT country) FROM singer", "SELECT count(country) FROM singer", False),
    (8, 2, CS, "SELECT avg(age) FROM singer", "SELECT avg(age) FROM singer", True),
    (9, 1, CS, "SELECT name FROM singer WHERE age BETWEEN 20 AND 30", "SELECT name FROM singer WHERE age BETWEEN 1 AND 2",
     True),
    (9, 2, CS, "SELECT name FROM singer WHERE name LIKE '%a%'", "SELECT name FROM singer WHERE name = 'a'", False),
    (10, 1, EH, "SELECT name FROM employee", "SELECT name FROM employee", True),
    (10, 2, EH, "SELECT city, count(*) FROM employee GROUP BY city", "SELECT city, count(*) FROM employee GROUP BY city",
     True),
    (10, 3, EH, "SELECT city FROM employee GROUP BY city HAVING count(*) > 1",
     "SELECT city FROM employee GROUP BY city HAVING count(*) > 1", True),
    (11, 1, EH, "SELECT name FROM employee ORDER BY age ASC LIMIT 1", "SELECT name FROM employee ORDER BY age DESC LIMIT 1",
     False),
    (11, 2, EH, "SELECT name, age FROM employee", "SELECT name FROM employee", False),
    (12, 1, EH, "SELECT T1.name FROM shop AS T1 JOIN hiring AS T2 ON T1.shop_id = T2.shop_id",
     "SELECT shop.name FROM hiring JOIN shop ON hiring.shop_id = shop.shop_id", True),
    (12, 2, EH, "SELECT name FROM shop WHERE district = 'North' OR district = 'South'",
     "SELECT name FROM shop WHERE district = 'South' OR district = 'North'", True),
    (12, 3, EH, "SELECT name FROM shop WHERE shop_id IN (SELECT shop_id FROM hiring)",
     "SELECT name FROM shop WHERE shop_id IN (SELECT shop_id FROM hiring WHERE is_full_time = 'T')", False),
    (13, 1, EH, "SELECT district FROM shop", "SELECT district FROM shop", True),
    (13, 2, EH, "SELECT district, count(*) FROM shop GROUP BY district",
     "SELECT district, count(*) FROM shop GROUP BY location", False),
    (13, 3, EH, "SELECT count(*) FROM shop", "SELECT count(*) FROM shop", True),
    (14, 1, EH, "SELECT name FROM employee WHERE age > 30", "SELECT name FROM employee WHERE age > 30", True),
    (14, 2, EH, "SELECT name FROM employee EXCEPT SELECT name FROM employee WHERE age < 25",
     "SELECT name FROM employee EXCEPT SELECT name FROM employee WHERE age < 25", True),
    (14, 3, EH, "SELECT name FROM employee WHERE city = 'Bristol' ORDER BY age DESC",
     "SELECT name FROM employee WHERE city = 'Bristol' ORDER BY age DESC", True),
    (14, 4, EH, "SELECT sum(age) FROM employee", "SELECT avg(age) FROM employee", False),
]


def main():
    os.makedirs(OUT, exist_ok=True)

    def dump(name, obj):
        with open(os.path.join(OUT, name), "w") as f:
            json.dump(obj, f, indent=1)
            f.write("\n")

    dump("tables.json", [CONCERT, EMPLOYEE])
    dump("concert_singer.json", [CONCERT])
    dump("train.json", interactions(TRAIN, True))
    dump("dev.json", interactions(EXTRA, True))
    dump("cqr_dataset.json", interactions(TRAIN + EXTRA, False))
    rows = TRAIN + EXTRA
    seed = []
    for inter, turn in SEED:
        db, turns = rows[inter]
        utt, _, sc = turns[turn]
        seed.append({"database_id": db, "interaction_index": inter, "turn_index": turn,
                     "self_contained": sc if sc is not None else utt})
    dump("cqr_seed.json", seed)
    with open(os.path.join(OUT, "roundtrip.txt"), "w") as f:
        for db, sql in ROUNDTRIP:
            f.write(f"{db}\t{sql}\n")
    dump("exact_match_pairs.json", [
        {"interaction": i, "turn": t, "database_id": db, "pred": p, "gold": g, "match": m}
        for i, t, db, p, g, m in EXACT
    ])


if __name__ == "__main__":
    main()
