"""Builds the three-task fixture stream: databases, tables.json, splits, stream config.

Also writes the mock LLM scripts under fixtures/mock/.

Run from the repository root:  python3 fixtures/make_fixtures.py
Then refresh hashes:            build/csp verify-fixtures --root fixtures --write-manifest
"""
import json
import os
import sqlite3

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "stream")

SCHEMAS = {
    "concert_singer": {
        "stadium": [("stadium_id", "number"), ("location", "text"), ("name", "text"),
                    ("capacity", "number"), ("opening_year", "number")],
        "singer": [("singer_id", "number"), ("name", "text"), ("country", "text"),
                   ("song_name", "text"), ("age", "number"), ("is_male", "text")],
        "concert": [("concert_id", "number"), ("concert_name", "text"), ("theme", "text"),
                    ("stadium_id", "number"), ("year", "text")],
        "singer_in_concert": [("concert_id", "number"), ("singer_id", "number")],
    },
    "pets_1": {
        "student": [("stu_id", "number"), ("lname", "text"), ("fname", "text"), ("age", "number"),
                    ("sex", "text"), ("major", "number"), ("city_code", "text")],
        "has_pet": [("stu_id", "number"), ("pet_id", "number")],
        "pets": [("pet_id", "number"), ("pet_type", "text"), ("pet_age", "number"), ("weight", "number")],
    },
    "employee_hire": {
        "employee": [("employee_id", "number"), ("name", "text"), ("age", "number"), ("city", "text")],
        "shop": [("shop_id", "number"), ("name", "text"), ("location", "text"), ("district", "text"),
                 ("number_products", "number"), ("manager_name", "text")],
        "hiring": [("shop_id", "number"), ("employee_id", "number"), ("start_from", "text"),
                   ("is_full_time", "text")],
        "evaluation": [("employee_id", "number"), ("year_awarded", "text"), ("bonus", "number")],
    },
}

ROWS = {
    "stadium": [(1, "Raith Rovers", "Stark's Park", 10104, 1998), (2, "Ayr United", "Somerset Park", 11998, 1995),
                (3, "East Fife", "Bayview Stadium", 2000, 2002), (4, "Queen's Park", "Hampden Park", 52500, 1903),
                (5, "Stirling Albion", "Forthbank Stadium", 3808, 1993)],
    "singer": [(1, "Joe Sharp", "Netherlands", "You", 52, "F"), (2, "Timbaland", "United States", "Dangerous", 32, "T"),
               (3, "Justin Brown", "France", "Hey Oh", 29, "T"), (4, "Rose White", "France", "Sun", 41, "F"),
               (5, "John Nizinik", "France", "Gentleman", 43, "T"), (6, "Tribal King", "France", "Love", 25, "T"),
               (7, "Lin Wei", "Japan", "Moon", 35, "F")],
    "concert": [(1, "Auditions", "Free choice", 1, "2014"), (2, "Super bootcamp", "Free choice 2", 2, "2014"),
                (3, "Home Visits", "Bleeding Love", 2, "2015"), (4, "Week 1", "Wide Awake", 3, "2014"),
                (5, "Week 2", "Happy Tonight", 4, "2015"), (6, "Week 3", "Party All Night", 5, "2015")],
    "singer_in_concert": [(1, 2), (1, 3), (1, 5), (2, 3), (2, 6), (3, 5), (4, 4), (5, 6), (5, 3), (6, 2)],
    "student": [(1001, "Smith", "Linda", 18, "F", 600, "BAL"), (1002, "Kim", "Tracy", 19, "F", 600, "HKG"),
                (1003, "Jones", "Shiela", 21, "F", 600, "WAS"), (1004, "Kumar", "Dinesh", 20, "M", 600, "CHI"),
                (1005, "Gompers", "Paul", 26, "M", 50, "YYZ"), (1006, "Schultz", "Andy", 18, "M", 600, "BAL"),
                (1007, "Apap", "Lisa", 18, "F", 50, "PIT"), (1008, "Nelson", "Jandy", 20, "F", 520, "BAL")],
    "has_pet": [(1001, 2001), (1002, 2002), (1002, 2003), (1005, 2004)],
    "pets": [(2001, "cat", 3, 12.0), (2002, "dog", 2, 13.4), (2003, "dog", 1, 9.3), (2004, "bird", 4, 0.5)],
    "employee": [(1, "George Chuter", 23, "Bristol"), (2, "Lee Mears", 29, "Bath"), (3, "Mark Regan", 43, "Bristol"),
                 (4, "Jason Hobson", 30, "Bristol"), (5, "Tim Payne", 29, "Wasps"),
                 (6, "Andrew Sheridan", 28, "Sale"), (7, "Matt Stevens", 29, "Bath"), (8, "Phil Vickery", 40, "Wasps")],
    "shop": [(1, "FC Haka", "Valkeakoski", "Tehtaan kentta", 3516, "Olli Huttunen"),
             (2, "HJK", "Helsinki", "Finnair Stadium", 10770, "Antti Muurinen"),
             (3, "FC Honka", "Espoo", "Tapiolan Urheilupuisto", 6000, "Mika Lehkosuo"),
             (4, "FC Inter", "Turku", "Veritas Stadion", 10000, "Job Dragtsma")],
    "hiring": [(1, 1, "2009", "T"), (1, 2, "2003", "T"), (2, 3, "2011", "F"), (3, 4, "2012", "T"),
               (4, 5, "2013", "T"), (2, 6, "2010", "F")],
    "evaluation": [(1, "2011", 3000), (2, "2015", 3200), (1, "2016", 3000), (4, "2017", 3200), (7, "2018", 3200)],
}

SQL_TYPES = {"number": "REAL", "text": "TEXT"}
INT_COLUMNS = {"stadium_id", "capacity", "opening_year", "singer_id", "age", "concert_id", "stu_id", "major",
               "pet_id", "pet_age", "employee_id", "shop_id", "number_products", "bonus"}

TASKS = {
    "t1_concert": ("concert_singer", {
        "train": [
            ("What are the names of singers whose country is France?",
             "SELECT name FROM singer WHERE country = 'France'"),
            ("How many singers are from each country?", "SELECT country , count(*) FROM singer GROUP BY country"),
            ("Show the name of the singer with the highest age.", "SELECT name FROM singer ORDER BY age DESC LIMIT 1"),
            ("What is the average age of singers from France?",
             "SELECT avg(age) FROM singer WHERE country = 'France'"),
            ("Show the names of singers who performed in a concert in 2014.",
             "SELECT T2.name FROM singer_in_concert AS T1 JOIN singer AS T2 ON T1.singer_id = T2.singer_id "
             "JOIN concert AS T3 ON T1.concert_id = T3.concert_id WHERE T3.year = '2014'"),
            ("List the stadium name and the number of concerts held in each stadium.",
             "SELECT T2.name , count(*) FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id "
             "GROUP BY T1.stadium_id"),
            ("Which singers have an age above the average age?",
             "SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer)"),
            ("What are the names of stadiums that never held a concert?",
             "SELECT name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concert)"),
            ("Show countries that have more than one singer.",
             "SELECT country FROM singer GROUP BY country HAVING count(*) > 1"),
            ("Show the concert name and theme of concerts in year 2015.",
             "SELECT concert_name , theme FROM concert WHERE year = '2015'"),
            ("List the names of stadiums with capacity between 5000 and 20000.",
             "SELECT name FROM stadium WHERE capacity BETWEEN 5000 AND 20000"),
            ("For each singer, show the name and the number of concerts they performed in, most first.",
             "SELECT T2.name , count(*) FROM singer_in_concert AS T1 JOIN singer AS T2 "
             "ON T1.singer_id = T2.singer_id GROUP BY T2.singer_id ORDER BY count(*) DESC"),
        ],
        "dev": [
            ("How many concerts were held in 2014?", "SELECT count(*) FROM concert WHERE year = '2014'"),
            ("Show stadium names and capacities ordered by capacity.",
             "SELECT name , capacity FROM stadium ORDER BY capacity DESC"),
            ("Which countries have singers older than 40?", "SELECT country FROM singer WHERE age > 40"),
        ],
        "test": [
            ("How many singers are there?", "SELECT count(*) FROM singer"),
            ("What are the names of singers from Japan?", "SELECT name FROM singer WHERE country = 'Japan'"),
            ("Show the location of the stadium with the largest capacity.",
             "SELECT location FROM stadium ORDER BY capacity DESC LIMIT 1"),
            ("Show the names of singers who performed in the concert Week 2.",
             "SELECT T2.name FROM singer_in_concert AS T1 JOIN singer AS T2 ON T1.singer_id = T2.singer_id "
             "JOIN concert AS T3 ON T1.concert_id = T3.concert_id WHERE T3.concert_name = 'Week 2'"),
            ("How many concerts were held in each year?", "SELECT year , count(*) FROM concert GROUP BY year"),
        ],
    }),
    "t2_pets": ("pets_1", {
        "train": [
            ("How many pets are there?", "SELECT count(*) FROM pets"),
            ("Find the first names of students older than 20.", "SELECT fname FROM student WHERE age > 20"),
            ("What is the average weight of dog pets?", "SELECT avg(weight) FROM pets WHERE pet_type = 'dog'"),
            ("List the last names of students ordered by age.", "SELECT lname FROM student ORDER BY age"),
            ("Find the number of pets for each pet type.", "SELECT pet_type , count(*) FROM pets GROUP BY pet_type"),
            ("What are the first names of students living in BAL?",
             "SELECT fname FROM student WHERE city_code = 'BAL'"),
            ("Find the maximum weight of pets for each pet type.",
             "SELECT pet_type , max(weight) FROM pets GROUP BY pet_type"),
            ("Find the first name of students who have a cat.",
             "SELECT T1.fname FROM student AS T1 JOIN has_pet AS T2 ON T1.stu_id = T2.stu_id "
             "JOIN pets AS T3 ON T2.pet_id = T3.pet_id WHERE T3.pet_type = 'cat'"),
            ("How many students with sex F are there?", "SELECT count(*) FROM student WHERE sex = 'F'"),
            ("Find the id of the heaviest pet.", "SELECT pet_id FROM pets ORDER BY weight DESC LIMIT 1"),
            ("List the first names of students whose major is 600 and age is 18.",
             "SELECT fname FROM student WHERE major = 600 AND age = 18"),
            ("Find the average age of students for each sex.", "SELECT sex , avg(age) FROM student GROUP BY sex"),
        ],
        "dev": [
            ("How many students have a pet?", "SELECT count(DISTINCT stu_id) FROM has_pet"),
            ("Find the weight of the youngest dog.",
             "SELECT weight FROM pets WHERE pet_type = 'dog' ORDER BY pet_age LIMIT 1"),
            ("List pet ids of pets older than 2.", "SELECT pet_id FROM pets WHERE pet_age > 2"),
        ],
        "test": [
            ("How many students are there?", "SELECT count(*) FROM student"),
            ("Find the last names of students in the city PIT.", "SELECT lname FROM student WHERE city_code = 'PIT'"),
            ("What is the average age of pets of type dog?", "SELECT avg(pet_age) FROM pets WHERE pet_type = 'dog'"),
            ("List the first names of students ordered by age descending.",
             "SELECT fname FROM student ORDER BY age DESC"),
            ("Find the number of students for each major.", "SELECT major , count(*) FROM student GROUP BY major"),
        ],
    }),
    "t3_employees": ("employee_hire", {
        "train": [
            ("How many employees are there?", "SELECT count(*) FROM employee"),
            ("Sort employee names by their age in ascending order.", "SELECT name FROM employee ORDER BY age"),
            ("What is the number of employees from each city?",
             "SELECT city , count(*) FROM employee GROUP BY city"),
            ("Find the names of employees from Bristol.", "SELECT name FROM employee WHERE city = 'Bristol'"),
            ("List the names of employees younger than 30.", "SELECT name FROM employee WHERE age < 30"),
            ("Find the manager name of the shop with the most products.",
             "SELECT manager_name FROM shop ORDER BY number_products DESC LIMIT 1"),
            ("What are the locations of all shops?", "SELECT location FROM shop"),
            ("Find the names of shops in Helsinki.", "SELECT name FROM shop WHERE location = 'Helsinki'"),
            ("What is the total bonus given in all evaluations?", "SELECT sum(bonus) FROM evaluation"),
            ("Find the district of shops with more than 5000 products.",
             "SELECT district FROM shop WHERE number_products > 5000"),
            ("List the cities of employees older than 35.", "SELECT city FROM employee WHERE age > 35"),
            ("What is the minimum and maximum number of products of all shops?",
             "SELECT min(number_products) , max(number_products) FROM shop"),
        ],
        "dev": [
            ("How many shops are there?", "SELECT count(*) FROM shop"),
            ("Find the names of employees from Bath.", "SELECT name FROM employee WHERE city = 'Bath'"),
            ("List the shop names ordered by number of products.", "SELECT name FROM shop ORDER BY number_products"),
        ],
        "test": [
            ("How many evaluations are there?", "SELECT count(*) FROM evaluation"),
            ("Find the names of employees from Sale.", "SELECT name FROM employee WHERE city = 'Sale'"),
            ("What is the average age of employees?", "SELECT avg(age) FROM employee"),
            ("List the names of shops in Espoo.", "SELECT name FROM shop WHERE location = 'Espoo'"),
            ("Which employee is the oldest?", "SELECT name FROM employee ORDER BY age DESC LIMIT 1"),
        ],
    }),
}


def build_db(db_id):
    path = os.path.join(ROOT, "database", db_id, db_id + ".sqlite")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    if os.path.exists(path):
        os.remove(path)
    con = sqlite3.connect(path)
    for table, cols in SCHEMAS[db_id].items():
        decl = ", ".join(
            '"%s" %s' % (c, "INTEGER" if c in INT_COLUMNS else SQL_TYPES[t]) for c, t in cols)
        con.execute('CREATE TABLE "%s" (%s)' % (table, decl))
        marks = ", ".join("?" for _ in cols)
        con.executemany('INSERT INTO "%s" VALUES (%s)' % (table, marks), ROWS[table])
    con.commit()
    con.execute("VACUUM")
    con.close()


def tables_json():
    out = []
    for db_id, tables in SCHEMAS.items():
        names = list(tables)
        cols = [[-1, "*"]]
        types = ["text"]
        for ti, t in enumerate(names):
            for c, ty in tables[t]:
                cols.append([ti, c])
                types.append(ty)
        natural = [[i, n.replace("_", " ")] for i, n in cols]
        out.append({"db_id": db_id, "table_names_original": names, "table_names": [n.replace("_", " ") for n in names],
                    "column_names_original": cols, "column_names": natural, "column_types": types,
                    "primary_keys": [], "foreign_keys": []})
    return out


def dump(path, value):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(value, f, indent=2)
        f.write("\n")


# Canned generations keyed on the schema block and on keywords in the prompt.
# The first matching entry wins, so specific shapes precede the fallback.
GENERATIONS = {
    "singer(singer_id": [
        ("generate_nested", None, "Which stadiums have a capacity above the average capacity?",
         "SELECT name FROM stadium WHERE capacity > (SELECT avg(capacity) FROM stadium)"),
        ("generate", "JOIN", "What are the names of singers who performed in the concert Auditions?",
         "SELECT T2.name FROM singer_in_concert AS T1 JOIN singer AS T2 ON T1.singer_id = T2.singer_id "
         "JOIN concert AS T3 ON T1.concert_id = T3.concert_id WHERE T3.concert_name = 'Auditions'"),
        ("generate", "GROUP BY", "How many concerts were held at each stadium id?",
         "SELECT stadium_id , count(*) FROM concert GROUP BY stadium_id"),
        ("generate", "ORDER BY", "Who is the tallest singer?", "SELECT name FROM singer ORDER BY age DESC LIMIT 1"),
        ("generate", "WHERE", "What are the song names of singers from France?",
         "SELECT song_name FROM singer WHERE nationality = 'France'"),
        ("generate", None, "List the locations of all stadiums.", "SELECT location FROM stadium"),
    ],
    "student(stu_id": [
        ("generate_nested", None, "Find the ids of pets heavier than the average weight.",
         "SELECT pet_id FROM pets WHERE weight > (SELECT avg(weight) FROM pets)"),
        ("generate", "JOIN", "Find the last names of students who have a dog.",
         "SELECT T1.lname FROM student AS T1 JOIN has_pet AS T2 ON T1.stu_id = T2.stu_id "
         "JOIN pets AS T3 ON T2.pet_id = T3.pet_id WHERE T3.pet_type = 'dog'"),
        ("generate", "GROUP BY", "How many students live in each city?",
         "SELECT city_code , count(*) FROM student GROUP BY city_code"),
        ("generate", "ORDER BY", "List the pet types ordered by pet age.", "SELECT pet_type FROM pets ORDER BY pet_age"),
        ("generate", "WHERE", "Find the first names of students with sex M.", "SELECT fname FROM student WHERE sex = 'M'"),
        ("generate", None, "How many students are there in total?", "SELECT count(*) FROM student"),
    ],
    "employee(employee_id": [
        ("generate_nested", None, "Which employees are older than the average age?",
         "SELECT name FROM employee WHERE age > (SELECT avg(age) FROM employee)"),
        ("generate", "JOIN", "What are the names of employees hired by the shop FC Haka?",
         "SELECT T1.name FROM employee AS T1 JOIN hiring AS T2 ON T1.employee_id = T2.employee_id "
         "JOIN shop AS T3 ON T2.shop_id = T3.shop_id WHERE T3.name = 'FC Haka'"),
        ("generate", "GROUP BY", "How many shops are in each location?",
         "SELECT location , count(*) FROM shop GROUP BY location"),
        ("generate", "ORDER BY", "List employee names ordered by age descending.",
         "SELECT name FROM employee ORDER BY age DESC"),
        ("generate", "WHERE", "Find the names of employees from Wasps.", "SELECT name FROM employee WHERE city = 'Wasps'"),
        ("generate", None, "How many hiring records are there?", "SELECT count(*) FROM hiring"),
    ],
}

STREAM_TAIL = [
    {"match": {"kind": "revise", "contains": "nationality"},
     "response": "SQL: SELECT song_name FROM singer WHERE country = 'France'", "repeat": True},
    {"match": {"kind": "revise", "contains": "tallest"},
     "response": "SQL: SELECT name FROM singer ORDER BY age DESC LIMIT 1", "repeat": True},
    {"match": {"kind": "verify", "contains": "tallest"},
     "response": "Incorrect. The table has no height column.", "repeat": True},
    {"match": {"kind": "verify"}, "response": "Correct", "repeat": True},
    {"match": {"kind": "rephrase"}, "response": "Could you answer the following request?", "repeat": True},
]

# Self-correction traces over concert_singer: verified at once, corrected after
# two revisions, rejected by the verifier, rejected on a column that never exists.
CALIBRATION = [
    {"match": {"kind": "verify", "contains": "Joe Sharp"}, "response": "Correct"},
    {"match": {"kind": "revise", "contains": "nation = 'Japan'"},
     "response": "SQL: SELECT count(*) FROM singer WHERE country = 'Japan' AND age > 100"},
    {"match": {"kind": "verify", "contains": "age > 100"}, "response": "Incorrect, the age filter is invented."},
    {"match": {"kind": "revise", "contains": "age > 100"},
     "response": "SQL: SELECT count(*) FROM singer WHERE country = 'Japan'"},
    {"match": {"kind": "verify", "contains": "country = 'Japan'\n"}, "response": "Correct"},
    {"match": {"kind": "verify", "contains": "tallest"}, "response": "Incorrect, no height column.", "repeat": True},
    {"match": {"kind": "revise", "contains": "tallest"},
     "response": "SQL: SELECT name FROM singer ORDER BY age DESC LIMIT 1", "repeat": True},
    {"match": {"kind": "revise", "contains": "height"},
     "response": "SQL: SELECT height FROM singer WHERE name = 'Lin Wei'", "repeat": True},
]


def write_jsonl(path, records):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def mock_scripts():
    mock = os.path.join(os.path.dirname(ROOT), "mock")
    stream = []
    for marker, entries in GENERATIONS.items():
        for kind, keyword, question, sql in entries:
            contains = [marker] + ([keyword] if keyword else [])
            stream.append({"match": {"kind": kind, "contains": contains},
                           "response": "Question: %s\nSQL: %s" % (question, sql), "repeat": True})
    write_jsonl(os.path.join(mock, "stream.jsonl"), stream + STREAM_TAIL)
    write_jsonl(os.path.join(mock, "calibration.jsonl"), CALIBRATION)


def main():
    for db_id in SCHEMAS:
        build_db(db_id)
    dump(os.path.join(ROOT, "tables.json"), tables_json())
    tasks = []
    for task_id, (db_id, splits) in TASKS.items():
        entry = {"task_id": task_id, "db_dir": "database"}
        for split, pairs in splits.items():
            rel = "%s/%s.json" % (task_id, split)
            dump(os.path.join(ROOT, rel), [{"db_id": db_id, "question": q, "query": s} for q, s in pairs])
            entry[split + "_path"] = rel
        tasks.append(entry)
    mock_scripts()
    dump(os.path.join(ROOT, "stream.json"),
         {"order_label": "warm_start", "tables_path": "tables.json", "tasks": tasks})


if __name__ == "__main__":
    main()
