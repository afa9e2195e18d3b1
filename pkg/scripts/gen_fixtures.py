"""Generate the test fixture tree under tests/fixtures/.

Writes deterministic inputs (schema, grouping, scripted tapes, articles,
records CSV, crosswalk, annotations) and, with --goldens, runs the pipeline
over them to freeze golden outputs plus the service state directory.

Tests never run this script; its outputs are committed. Rerun it only when
fixtures change on purpose, and re-review the goldens afterwards.
"""

from __future__ import annotations

import argparse
import json
import shutil
import struct
import sys
import zlib
from pathlib import Path

from form57.schema import (
    AnswerPlace,
    AnswerType,
    FormField,
    FormSchema,
    GroupingAssignment,
    answer_key,
    dumps_document,
    serialize_schema,
    validate_groups_format,
    validate_transcription_format,
)

ROOT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

YN = {"1": "Yes", "2": "No"}
YNU = {"1": "Yes", "2": "No", "3": "Unknown"}
COMPASS = {"N": "North", "S": "South", "E": "East", "W": "West"}

# (field id, name, places); places default to a single free place named "value".
FIELDS = [
    ("1", "Name of Reporting Railroad", [("value", "text", None)]),
    ("2", "Railroad Alphabetic Code", [("value", "text", None)]),
    ("3", "Railroad Accident/Incident Number", [("value", "text", None)]),
    ("4", "U.S. DOT Grade Crossing Identification Number", [("value", "digit", None)]),
    (
        "5",
        "Date of Accident/Incident",
        [("Month", "digit", None), ("Day", "digit", None), ("Year", "digit", None)],
    ),
    (
        "6",
        "Time of Accident/Incident",
        [("Time", "digit", None), ("AM/PM", "choice", {"AM": "AM", "PM": "PM"})],
    ),
    ("7", "Nearest Railroad Timetable Station", [("value", "text", None)]),
    ("8", "Railroad Division or Region", [("value", "text", None)]),
    ("9", "County", [("value", "text", None)]),
    ("10", "State", [("value", "text", None)]),
    ("11", "Nearest City or Town", [("value", "text", None)]),
    ("12", "Highway Name or Number", [("value", "text", None)]),
    ("13", "Highway Type", [("value", "choice", {"1": "Public", "2": "Private"})]),
    (
        "14",
        "Type of Highway User",
        [
            (
                "value",
                "choice",
                {
                    "A": "Automobile",
                    "B": "Truck",
                    "C": "Truck-trailer",
                    "D": "Pickup truck",
                    "E": "Van",
                    "F": "Bus",
                    "G": "School bus",
                    "H": "Motorcycle",
                    "J": "Other motor vehicle",
                    "K": "Pedestrian",
                    "M": "Other",
                },
            )
        ],
    ),
    ("15", "Direction", [("value", "choice", dict(COMPASS))]),
    (
        "16",
        "Position of Highway User",
        [
            (
                "value",
                "choice",
                {
                    "1": "Stalled or stuck on crossing",
                    "2": "Stopped on crossing",
                    "3": "Moving over crossing",
                    "4": "Trapped on crossing by traffic",
                },
            )
        ],
    ),
    (
        "17",
        "Equipment",
        [
            (
                "value",
                "choice",
                {
                    "1": "Train pulling",
                    "2": "Train pushing",
                    "3": "Train standing",
                    "4": "Cars moving",
                    "5": "Cars standing",
                    "6": "Light locomotives moving",
                    "7": "Light locomotives standing",
                    "8": "Other",
                },
            )
        ],
    ),
    (
        "18",
        "Circumstance of Impact",
        [
            (
                "value",
                "choice",
                {
                    "1": "Rail equipment struck highway user",
                    "2": "Rail equipment struck by highway user",
                },
            )
        ],
    ),
    ("19", "Age of Highway User", [("value", "digit", None)]),
    ("20", "Sex of Highway User", [("value", "choice", {"M": "Male", "F": "Female"})]),
    ("21", "Estimated Speed of Highway User", [("value", "digit", None)]),
    ("22", "Highway Vehicle Property Damage", [("value", "digit", None)]),
    ("23", "Number of Locomotive Units", [("value", "digit", None)]),
    (
        "24",
        "Type of Equipment Consist",
        [
            (
                "value",
                "choice",
                {
                    "1": "Freight train",
                    "2": "Passenger train",
                    "3": "Commuter train",
                    "4": "Work train",
                    "5": "Single car",
                    "6": "Cut of cars",
                    "7": "Yard or switching movement",
                    "8": "Light locomotives",
                    "9": "Maintenance or inspection car",
                    "A": "Special maintenance-of-way equipment",
                },
            )
        ],
    ),
    ("25", "Number of Rail Cars in Consist", [("value", "digit", None)]),
    (
        "26",
        "Speed of Rail Equipment",
        [
            ("MPH", "digit", None),
            ("Speed Basis", "choice", {"E": "Estimated", "R": "Recorded"}),
        ],
    ),
    ("27", "Direction of Rail Equipment", [("value", "choice", dict(COMPASS))]),
    ("28", "Temperature in Fahrenheit", [("value", "digit", None)]),
    (
        "29",
        "Visibility",
        [("value", "choice", {"1": "Dawn", "2": "Day", "3": "Dusk", "4": "Dark"})],
    ),
    (
        "30",
        "Weather",
        [
            (
                "value",
                "choice",
                {
                    "1": "Clear",
                    "2": "Cloudy",
                    "3": "Rain",
                    "4": "Fog",
                    "5": "Sleet",
                    "6": "Snow",
                },
            )
        ],
    ),
    (
        "31",
        "Type of Track",
        [("value", "choice", {"1": "Main", "2": "Yard", "3": "Siding", "4": "Industry"})],
    ),
    ("32", "Track Name or Number", [("value", "text", None)]),
    ("33", "FRA Track Class", [("value", "digit", None)]),
    ("34", "Number of Tracks at Crossing", [("value", "digit", None)]),
    ("35", "Average Daily Train Traffic", [("value", "digit", None)]),
    (
        "36",
        "Typical Train Speed Range Over Crossing",
        [("From MPH", "digit", None), ("To MPH", "digit", None)],
    ),
    (
        "37",
        "Type of Crossing Warning Device",
        [
            (
                "value",
                "choice",
                {
                    "1": "Gates",
                    "2": "Cantilever flashing lights",
                    "3": "Standard flashing lights",
                    "4": "Wig wags",
                    "5": "Highway traffic signals",
                    "6": "Audible bells",
                    "7": "Crossbucks",
                    "8": "Stop signs",
                    "9": "Watchman",
                    "10": "Flagged by crew",
                    "11": "None",
                },
            )
        ],
    ),
    (
        "38",
        "Crossing Warning Location",
        [
            (
                "value",
                "choice",
                {"1": "Both approaches", "2": "Single approach", "3": "Not applicable"},
            )
        ],
    ),
    (
        "39",
        "Warning Interconnected with Highway Signals",
        [("value", "choice", dict(YNU))],
    ),
    ("40", "Crossing Illuminated by Street Lights", [("value", "choice", dict(YNU))]),
    (
        "41",
        "Highway User Action",
        [
            (
                "value",
                "choice",
                {
                    "1": "Drove around or through gate",
                    "2": "Stopped and then proceeded",
                    "3": "Did not stop",
                    "4": "Stopped on crossing",
                    "5": "Other",
                },
            )
        ],
    ),
    ("42", "Driver Passed a Standing Vehicle", [("value", "choice", dict(YNU))]),
    (
        "43",
        "View of Track Obstructed By",
        [
            (
                "value",
                "choice",
                {
                    "1": "Permanent structure",
                    "2": "Standing rail equipment",
                    "3": "Passing train",
                    "4": "Topography",
                    "5": "Vegetation",
                    "6": "Highway vehicles",
                    "7": "Other",
                    "8": "Not obstructed",
                },
            )
        ],
    ),
    (
        "44",
        "Driver Condition",
        [("value", "choice", {"1": "Killed", "2": "Injured", "3": "Uninjured"})],
    ),
    ("45", "Driver Was in Vehicle", [("value", "choice", dict(YN))]),
    (
        "46",
        "Highway User Casualties",
        [("Killed", "digit", None), ("Injured", "digit", None)],
    ),
    (
        "47",
        "Railroad Employee Casualties",
        [("Killed", "digit", None), ("Injured", "digit", None)],
    ),
    (
        "48",
        "Passengers on Train Casualties",
        [("Killed", "digit", None), ("Injured", "digit", None)],
    ),
    ("49", "Total Occupants in Highway Vehicle", [("value", "digit", None)]),
    ("50", "Rail Equipment Accident Report Filed", [("value", "choice", dict(YN))]),
    ("51", "Hazardous Materials Involved", [("value", "choice", dict(YN))]),
    (
        "52",
        "Hazardous Materials Released By",
        [
            (
                "value",
                "choice",
                {"1": "Highway user", "2": "Rail equipment", "3": "Neither"},
            )
        ],
    ),
    ("53", "Hazardous Materials Name", [("value", "text", None)]),
    ("54", "Quantity of Hazardous Materials Released", [("value", "digit", None)]),
    ("55", "Number of People Evacuated", [("value", "digit", None)]),
    (
        "56",
        "Crossing Surface Type",
        [
            (
                "value",
                "choice",
                {
                    "1": "Timber",
                    "2": "Asphalt",
                    "3": "Asphalt and flange",
                    "4": "Concrete",
                    "5": "Concrete and rubber",
                    "6": "Rubber",
                    "7": "Metal",
                    "8": "Unconsolidated",
                    "9": "Other",
                },
            )
        ],
    ),
    (
        "57",
        "Intersecting Roadway Within 500 Feet",
        [("Present", "choice", dict(YN)), ("Distance in Feet", "digit", None)],
    ),
    ("58", "Narrative Description", [("value", "text", None)]),
    ("59", "Crossing Equipped with Video Monitoring", [("value", "choice", dict(YN))]),
    ("60", "Name of Person Completing Report", [("value", "text", None)]),
    ("61", "Title of Person Completing Report", [("value", "text", None)]),
    ("62", "Contact Telephone Number", [("value", "text", None)]),
    ("63", "Date of Report", [("value", "text", None)]),
    ("64", "Railroad Contact Person", [("value", "text", None)]),
    ("65", "Railroad Contact Telephone", [("value", "text", None)]),
    ("66", "Remarks", [("value", "text", None)]),
]

GROUPS = {
    "time & location": ["4", "5", "6", "7", "8", "9", "10", "11", "12", "13"],
    "highway user": [
        "14", "15", "16", "18", "19", "20", "21", "22", "41", "42", "44", "45", "49",
    ],
    "train": [
        "17", "23", "24", "25", "26", "27", "31", "32", "33", "34", "35", "36", "50",
    ],
    "environment": ["28", "29", "30", "37", "38", "39", "40", "43", "56", "57", "59"],
    "hazardous materials": ["51", "52", "53", "54", "55"],
    "casualties": ["46", "47", "48"],
    "report information": [
        "1", "2", "3", "58", "60", "61", "62", "63", "64", "65", "66",
    ],
}


def build_schema() -> FormSchema:
    fields = {}
    for field_id, name, places in FIELDS:
        built = {}
        for place_name, answer_type, choices in places:
            built[place_name] = AnswerPlace(
                name=place_name,
                answer_type=AnswerType(answer_type),
                choices=dict(choices) if choices else {},
            )
        fields[field_id] = FormField(
            field_id=field_id, name=f"{field_id}. {name}", answer_places=built
        )
    return FormSchema(fields=fields)


def tiny_png() -> bytes:
    """1x1 white PNG, stdlib only."""

    def chunk(kind: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + kind
            + data
            + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", 1, 1, 8, 2, 0, 0, 0)
    raw = zlib.compress(b"\x00\xff\xff\xff")
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", raw)
        + chunk(b"IEND", b"")
    )


# ---------------------------------------------------------------------------
# Articles and expected answers for the end-to-end pair

ARTICLE_A_ID = "crossing-accident-bakersfield"
ARTICLE_A_BODY = """\
Driver killed when freight train strikes pickup near Bakersfield

BAKERSFIELD, Calif. - A 34-year-old man died Thursday afternoon, March 14,
2024, when a Pacific Valley Railroad freight train struck his pickup truck at
the Jameson Road crossing in rural Kern County, authorities said.

The crash happened at about 2:30 p.m. Investigators said the pickup was
northbound on Jameson Road and did not stop at the flashing lights. The train,
two locomotives pulling loaded grain cars, was moving at an estimated 45 mph
when it hit the truck broadside. The driver, who was alone in the truck and
was not wearing a seat belt, was pronounced dead at the scene. No one aboard
the train was hurt.

Skies were clear and it was full daylight at the time of the collision, the
sheriff's office said. The crossing sits on the railroad's main line through
the county. The driver was traveling at roughly 15 mph on approach, according
to a preliminary report.
"""
ARTICLE_A_META = {
    "published_date": "2024-03-15",
    "state": "CA",
    "county": "Kern",
    "city": "Bakersfield",
    "highway": "Jameson Road",
    "user_sex": "M",
    "user_age": 34,
    "killed": 1,
    "injured": 0,
}

ARTICLE_B_ID = "train-strikes-van-marion"
ARTICLE_B_BODY = """\
Two hurt as train hits van at Marion crossing

MARION, Ohio - A woman and her passenger were injured early Monday, March 18,
2024, when a Lakeshore & Ohio Railway freight train struck their van at the
State Route 98 crossing on the edge of Marion, police said.

The collision was reported at 7:45 a.m., just after dawn. The 58-year-old
driver was southbound on State Route 98 when the van was hit by the train,
which event recorders showed was traveling 32 mph. Both occupants of the van
were taken to a hospital with injuries that were not considered life
threatening. The crossing is protected by gates, which police said were
working; the van drove around the lowered gate.

Fog limited visibility at the time, and the locomotive engineer told
investigators he sounded the horn before reaching the crossing. The train,
a single locomotive with mixed freight, was headed south.
"""
ARTICLE_B_META = {
    "published_date": "2024-03-19",
    "state": "OH",
    "county": "Marion",
    "city": "Marion",
    "highway": "State Route 98",
    "user_sex": "F",
    "user_age": 58,
    "killed": 0,
    "injured": 2,
}

ANSWERS_A = {
    "1/value": "Pacific Valley Railroad",
    "2/value": "Unknown",
    "3/value": "Unknown",
    "4/value": "Unknown",
    "5/Month": 3,
    "5/Day": 14,
    "5/Year": 2024,
    "6/Time": "2:30 PM",
    "6/AM-PM": "PM",
    "7/value": "Unknown",
    "8/value": "Unknown",
    "9/value": "Kern",
    "10/value": "CA",
    "11/value": "Bakersfield",
    "12/value": "Jameson Rd",
    "13/value": "1",
    "14/value": "D",
    "15/value": "North",
    "16/value": "Unknown",
    "17/value": "1",
    "18/value": "1",
    "19/value": 34,
    "20/value": "M",
    "21/value": "about 15 mph",
    "22/value": "Unknown",
    "23/value": 2,
    "24/value": "1",
    "25/value": "Unknown",
    "26/MPH": 45,
    "26/Speed Basis": "E",
    "27/value": "Unknown",
    "28/value": "Unknown",
    "29/value": "2",
    "30/value": "Unknown",
    "31/value": "1",
    "32/value": "Unknown",
    "33/value": "Unknown",
    "34/value": "Unknown",
    "35/value": "Unknown",
    "36/From MPH": "Unknown",
    "36/To MPH": "Unknown",
    "37/value": "3",
    "38/value": "Unknown",
    "39/value": "Unknown",
    "40/value": "Unknown",
    "41/value": "3",
    "42/value": "Unknown",
    "43/value": "8",
    "44/value": "1",
    "45/value": "1",
    "46/Killed": 1,
    "46/Injured": 0,
    "47/Killed": 0,
    "47/Injured": 0,
    "48/Killed": 0,
    "48/Injured": 0,
    "49/value": "Unknown",
    "50/value": "Unknown",
    "51/value": "2",
    "52/value": "3",
    "53/value": "Unknown",
    "54/value": "Unknown",
    "55/value": "Unknown",
    "56/value": "Unknown",
    "57/Present": "Unknown",
    "57/Distance in Feet": "Unknown",
    "58/value": (
        "A pickup truck was struck by a freight train at the Jameson Road "
        "crossing near Bakersfield, killing the driver."
    ),
    "59/value": "Unknown",
    "60/value": "Unknown",
    "61/value": "Unknown",
    "62/value": "Unknown",
    "63/value": "Unknown",
    "64/value": "Unknown",
    "65/value": "Unknown",
    "66/value": "Unknown",
}

ANSWERABLE_A = [
    "1/value", "5/Month", "5/Day", "5/Year", "6/Time", "6/AM-PM", "9/value",
    "10/value", "11/value", "12/value", "14/value", "15/value", "16/value",
    "18/value", "19/value", "20/value", "21/value", "24/value", "26/MPH",
    "26/Speed Basis", "29/value", "30/value", "41/value", "44/value",
    "45/value", "46/Killed", "46/Injured", "49/value", "51/value", "58/value",
]

ANSWERS_B = {
    "1/value": "Lakeshore & Ohio Railway",
    "2/value": "Unknown",
    "3/value": "Unknown",
    "4/value": "Unknown",
    "5/Month": 3,
    "5/Day": 18,
    "5/Year": 2024,
    "6/Time": "07:45",
    "6/AM-PM": "AM",
    "7/value": "Unknown",
    "8/value": "Unknown",
    "9/value": "Marion",
    "10/value": "OH",
    "11/value": "Marion",
    "12/value": "State Route 98",
    "13/value": "1",
    "14/value": "E",
    "15/value": "N",
    "16/value": "2",
    "17/value": "1",
    "18/value": "1",
    "19/value": 58,
    "20/value": "F",
    "21/value": "Unknown",
    "22/value": "Unknown",
    "23/value": 1,
    "24/value": "1",
    "25/value": "Unknown",
    "26/MPH": 32,
    "26/Speed Basis": "R",
    "27/value": "S",
    "28/value": "Unknown",
    "29/value": "1",
    "30/value": "Fog",
    "31/value": "Unknown",
    "32/value": "Unknown",
    "33/value": "Unknown",
    "34/value": "Unknown",
    "35/value": "Unknown",
    "36/From MPH": "Unknown",
    "36/To MPH": "Unknown",
    "37/value": "1",
    "38/value": "Unknown",
    "39/value": "Unknown",
    "40/value": "Unknown",
    "41/value": "1",
    "42/value": "Unknown",
    "43/value": "Unknown",
    "44/value": "2",
    "45/value": "1",
    "46/Killed": 0,
    "46/Injured": 2,
    "47/Killed": 0,
    "47/Injured": 0,
    "48/Killed": 0,
    "48/Injured": 0,
    "49/value": 2,
    "50/value": "Unknown",
    "51/value": "2",
    "52/value": "3",
    "53/value": "Unknown",
    "54/value": "Unknown",
    "55/value": "Unknown",
    "56/value": "Unknown",
    "57/Present": "Unknown",
    "57/Distance in Feet": "Unknown",
    "58/value": (
        "A freight train struck a van at the State Route 98 crossing in "
        "Marion at dawn; the driver and a passenger were hurt."
    ),
    "59/value": "Unknown",
    "60/value": "Unknown",
    "61/value": "Unknown",
    "62/value": "Unknown",
    "63/value": "Unknown",
    "64/value": "Unknown",
    "65/value": "Unknown",
    "66/value": "Unknown",
}

ANSWERABLE_B = [
    "1/value", "5/Month", "5/Day", "5/Year", "6/Time", "6/AM-PM", "9/value",
    "10/value", "11/value", "12/value", "14/value", "15/value", "19/value",
    "20/value", "24/value", "26/MPH", "26/Speed Basis", "27/value", "29/value",
    "30/value", "37/value", "41/value", "44/value", "45/value", "46/Killed",
    "46/Injured", "49/value", "51/value", "58/value",
]

E2E_RECORDS_HEADER = (
    "record_id,date,state,county,city,killed,injured,time,highway,"
    "user_sex,user_age,vehicle_speed,train_speed,direction,weather"
)
E2E_RECORDS_ROWS = [
    "R2024-0311,2024-03-14,CA,Kern,Bakersfield,1,0,14:30,Jameson Road,M,34,15,45,North,Clear",
    "R2024-0329,2024-03-18,OH,Marion,Marion,0,2,7:50 AM,State Route 98,F,58,,30,South,Fog",
    "R2024-0298,2024-03-12,WA,King,Seattle,0,1,09:10,Airport Way,M,27,5,20,East,Rain",
    "R2024-0344,2024-03-21,FL,Orange,Orlando,0,0,16:05,Sand Lake Road,F,45,10,35,West,Clear",
]

CROSSWALK = {
    "6/Time": {"column": "time", "semantics": "time"},
    "9/value": {"column": "county"},
    "10/value": {"column": "state"},
    "11/value": {"column": "city"},
    "12/value": {"column": "highway"},
    "15/value": {
        "column": "direction",
        "value_map": {"North": "N", "South": "S", "East": "E", "West": "W"},
    },
    "19/value": {"column": "user_age"},
    "20/value": {"column": "user_sex"},
    "21/value": {"column": "vehicle_speed", "semantics": "speed"},
    "26/MPH": {"column": "train_speed", "semantics": "speed"},
    "30/value": {
        "column": "weather",
        "value_map": {
            "Clear": "1",
            "Cloudy": "2",
            "Rain": "3",
            "Fog": "4",
            "Sleet": "5",
            "Snow": "6",
        },
    },
    "46/Killed": {"column": "killed"},
    "46/Injured": {"column": "injured"},
}

# ---------------------------------------------------------------------------
# Linkage fixture: 20 records, 10 articles, hand-built expectations in tests

LINKAGE_RECORDS_HEADER = (
    "record_id,date,state,county,city,killed,injured,time,highway,user_sex,user_age"
)
LINKAGE_RECORDS_ROWS = [
    "R01,2024-03-10,CA,Kern,Bakersfield,1,0,11:05,Olive Drive,M,42",
    "R02,2024-03-12,TX,Harris,Houston,0,1,08:40,Main Street,F,30",
    "R03,2024-03-12,TX,Harris,Houston,0,1,08:40,Main Street,F,30",
    "R04,2024-03-05,OH,Marion,,0,2,17:20,SR 98,M,61",
    "R05,2024-03-16,NY,Erie,Buffalo,1,0,13:10,Walden Avenue,M,55",
    "R06,2024-03-20,NY,Erie,Buffalo,1,0,06:55,Broadway,M,23",
    "R07,2024-03-01,CA,Fresno,Fresno,0,1,19:45,Shields Avenue,F,38",
    "R08,2024-03-15,AZ,Maricopa,Phoenix,1,0,21:30,Grand Avenue,M,50",
    "R09,2024-03-18,WA,King,,0,3,07:05,Interstate 90,M,33",
    "R10,2024-03-22,FL,Orange,Orlando,0,1,15:50,Colonial Drive,F,61",
    "R11,2024-03-22,FL,Orange,Orlando,0,1,10:15,Colonial Drive,F,29",
    "R12,2024-03-25,IL,Cook,Chicago,1,1,12:00,Archer Avenue,M,40",
    "R13,2024-03-23,IL,Cook,Chicago,1,1,12:30,Archer Avenue,M,40",
    "R14,2024-03-08,GA,Fulton,Atlanta,2,0,18:05,Marietta Road,M,35",
    "R15,2024-03-28,CO,Denver,Denver,0,0,09:55,Brighton Boulevard,F,47",
    "R16,2024-02-20,CA,Kern,Bakersfield,0,1,14:45,Union Avenue,F,29",
    "R17,2024-03-11,TX,Bexar,San Antonio,1,0,05:30,Frio City Road,M,58",
    "R18,2024-03-30,MO,Jackson,Kansas City,0,2,20:10,Truman Road,F,36",
    "R19,2024-03-17,PA,Allegheny,Pittsburgh,0,0,11:40,Carson Street,M,44",
    "R20,2024-03-09,NC,Wake,Raleigh,1,2,16:25,Capital Boulevard,F,52",
]

LINKAGE_ARTICLES = {
    "a01": {
        "published_date": "2024-03-11",
        "state": "CA",
        "county": "Kern",
        "city": "Bakersfield",
        "user_sex": "M",
        "user_age": 43,
        "killed": 1,
    },
    "a02": {
        "published_date": "2024-03-13",
        "state": "TX",
        "county": "Harris",
        "city": "Houston",
        "killed": 0,
        "injured": 1,
    },
    "a03": {
        "published_date": "2024-03-07",
        "state": "OH",
        "city": "Marion",
        "injured": 2,
    },
    "a04": {
        "published_date": "2024-03-20",
        "state": "NY",
        "county": "Erie",
        "city": "Buffalo",
        "user_age": 54,
        "killed": 1,
    },
    "a05": {
        "published_date": "2024-03-10",
        "state": "CA",
        "county": "Fresno",
        "city": "Fresno",
        "injured": 1,
    },
    "a06": {
        "published_date": "2024-03-16",
        "state": "NM",
        "county": "Maricopa",
        "city": "Phoenix",
        "killed": 1,
    },
    "a07": {
        "published_date": "2024-03-19",
        "state": "WA",
        "highway": "interstate 90.",
        "killed": 0,
        "injured": 3,
    },
    "a08": {
        "published_date": "2024-03-24",
        "state": "FL",
        "county": "Orange",
        "city": "Orlando",
        "user_age": 28,
        "killed": 0,
        "injured": 1,
    },
    "a09": {
        "published_date": "2024-03-26",
        "state": "IL",
        "county": "Cook",
        "city": "Chicago",
        "user_sex": "M",
        "user_age": 40,
        "killed": 1,
        "injured": 1,
    },
    "a10": {
        "published_date": "2024-03-10",
        "state": "GA",
        "county": "Fulton",
        "city": "Atlanta",
        "killed": 1,
    },
}


def field_key_batches(schema: FormSchema, grouping: GroupingAssignment):
    """(group mode batches, single mode batches, all mode batch) of keys."""
    by_field: dict[str, list[str]] = {}
    for key, form_field, _ in schema.answer_keys():
        by_field.setdefault(form_field.field_id, []).append(key)
    group_batches = [
        [key for fid in members for key in by_field[fid]]
        for members in grouping.groups.values()
    ]
    single_batches = [by_field[fid] for fid in schema.field_ids]
    all_batch = [key for fid in schema.field_ids for key in by_field[fid]]
    return group_batches, single_batches, all_batch


def tape_entry(answers: dict, keys: list[str], contains: str) -> dict:
    payload = {key: answers[key] for key in keys}
    return {
        "match": {"contains": contains, "role": "qa"},
        "response": json.dumps(payload, indent=2, ensure_ascii=False),
    }


def write_inputs(root: Path) -> None:
    schema = build_schema()
    schema_payload = serialize_schema(schema)
    issues = validate_transcription_format(schema_payload)
    assert issues.ok, issues.issues

    grouping = GroupingAssignment.from_payload(GROUPS)
    assert validate_groups_format(GROUPS, schema).ok

    all_keys = {key for key, _, _ in schema.answer_keys()}
    assert set(ANSWERS_A) == all_keys, set(ANSWERS_A) ^ all_keys
    assert set(ANSWERS_B) == all_keys, set(ANSWERS_B) ^ all_keys
    assert set(ANSWERABLE_A) <= all_keys
    assert set(ANSWERABLE_B) <= all_keys

    schema_dir = root / "schema"
    schema_dir.mkdir(parents=True, exist_ok=True)
    (schema_dir / "form_schema.json").write_text(
        dumps_document(schema_payload), encoding="utf-8"
    )
    (schema_dir / "grouping.json").write_text(dumps_document(GROUPS), encoding="utf-8")

    (root / "form.png").write_bytes(tiny_png())

    # scripted tape for the transcription pipeline (N=5, all valid)
    schema_text = dumps_document(schema_payload)
    grouping_text = dumps_document(GROUPS)
    tape = []
    for _ in range(5):
        tape.append({"match": {"role": "transcriber"}, "response": schema_text})
    tape.append({"match": {"role": "merger"}, "response": schema_text})
    for _ in range(5):
        tape.append({"match": {"role": "grouper"}, "response": grouping_text})
    tape.append({"match": {"role": "merger"}, "response": grouping_text})
    tapes_dir = root / "tapes"
    tapes_dir.mkdir(parents=True, exist_ok=True)
    (tapes_dir / "transcribe.json").write_text(
        dumps_document(tape), encoding="utf-8"
    )

    # extraction tapes, one per batching mode; article order is alphabetical
    group_batches, single_batches, all_batch = field_key_batches(schema, grouping)
    articles = [
        (ARTICLE_A_ID, ANSWERS_A, "Jameson Road"),
        (ARTICLE_B_ID, ANSWERS_B, "State Route 98"),
    ]
    group_tape = [
        tape_entry(answers, keys, contains)
        for _, answers, contains in articles
        for keys in group_batches
    ]
    # reorder: per article, then per batch (articles is outer loop already)
    (tapes_dir / "extract_group.json").write_text(
        dumps_document(group_tape), encoding="utf-8"
    )
    single_tape = [
        tape_entry(answers, keys, contains)
        for _, answers, contains in articles
        for keys in single_batches
    ]
    (tapes_dir / "extract_single.json").write_text(
        dumps_document(single_tape), encoding="utf-8"
    )
    all_tape = [
        tape_entry(answers, all_batch, contains) for _, answers, contains in articles
    ]
    (tapes_dir / "extract_all.json").write_text(
        dumps_document(all_tape), encoding="utf-8"
    )

    # rerun tape: one call, casualties group of the Bakersfield article,
    # with one value changed against the stored form (46/Injured 0 -> 1)
    casualties_keys = [
        key
        for keys, name in zip(group_batches, grouping.groups)
        if name == "casualties"
        for key in keys
    ]
    rerun_answers = dict(ANSWERS_A)
    rerun_answers["46/Injured"] = 1
    rerun_tape = [tape_entry(rerun_answers, casualties_keys, "Jameson Road")]
    (tapes_dir / "rerun.json").write_text(dumps_document(rerun_tape), encoding="utf-8")

    # end-to-end articles, records, crosswalk, annotations
    e2e = root / "e2e"
    articles_dir = e2e / "articles"
    articles_dir.mkdir(parents=True, exist_ok=True)
    (articles_dir / f"{ARTICLE_A_ID}.txt").write_text(ARTICLE_A_BODY, encoding="utf-8")
    (articles_dir / f"{ARTICLE_A_ID}.meta.json").write_text(
        dumps_document(ARTICLE_A_META), encoding="utf-8"
    )
    (articles_dir / f"{ARTICLE_B_ID}.txt").write_text(ARTICLE_B_BODY, encoding="utf-8")
    (articles_dir / f"{ARTICLE_B_ID}.meta.json").write_text(
        dumps_document(ARTICLE_B_META), encoding="utf-8"
    )
    (e2e / "records.csv").write_text(
        E2E_RECORDS_HEADER + "\n" + "\n".join(E2E_RECORDS_ROWS) + "\n", encoding="utf-8"
    )
    (e2e / "crosswalk.json").write_text(dumps_document(CROSSWALK), encoding="utf-8")
    annotations_dir = e2e / "annotations"
    annotations_dir.mkdir(parents=True, exist_ok=True)
    (annotations_dir / f"{ARTICLE_A_ID}.answerable.json").write_text(
        json.dumps(sorted(ANSWERABLE_A), indent=2) + "\n", encoding="utf-8"
    )
    (annotations_dir / f"{ARTICLE_B_ID}.answerable.json").write_text(
        json.dumps(sorted(ANSWERABLE_B), indent=2) + "\n", encoding="utf-8"
    )

    # linkage fixture: 20 records, 10 sparse articles
    linkage_dir = root / "linkage"
    linkage_articles = linkage_dir / "articles"
    linkage_articles.mkdir(parents=True, exist_ok=True)
    (linkage_dir / "records.csv").write_text(
        LINKAGE_RECORDS_HEADER + "\n" + "\n".join(LINKAGE_RECORDS_ROWS) + "\n",
        encoding="utf-8",
    )
    for article_id, meta in LINKAGE_ARTICLES.items():
        (linkage_articles / f"{article_id}.txt").write_text(
            f"Incident report article {article_id}.\n", encoding="utf-8"
        )
        (linkage_articles / f"{article_id}.meta.json").write_text(
            dumps_document(meta), encoding="utf-8"
        )

    print(f"inputs written under {root}")


def write_goldens(root: Path) -> None:
    from form57.cli import main as cli_main

    golden = root / "golden"
    if golden.exists():
        shutil.rmtree(golden)
    golden.mkdir(parents=True)

    rc = cli_main(
        [
            "transcribe",
            "--image", str(root / "form.png"),
            "--backend", f"scripted:{root / 'tapes' / 'transcribe.json'}",
            "--out", str(golden / "transcribe"),
            "--workers", "1",
        ]
    )
    assert rc == 0, f"transcribe exited {rc}"

    rc = cli_main(
        [
            "extract",
            "--articles", str(root / "e2e" / "articles"),
            "--schema", str(golden / "transcribe" / "T_final.json"),
            "--grouping", str(golden / "transcribe" / "G_final.json"),
            "--mode", "group",
            "--backend", f"scripted:{root / 'tapes' / 'extract_group.json'}",
            "--out", str(golden / "forms"),
        ]
    )
    assert rc == 0, f"extract exited {rc}"

    rc = cli_main(
        [
            "link",
            "--articles", str(root / "e2e" / "articles"),
            "--records", str(root / "e2e" / "records.csv"),
            "--out", str(golden / "link"),
        ]
    )
    assert rc == 0, f"link exited {rc}"

    rc = cli_main(
        [
            "evaluate",
            "--forms", str(golden / "forms"),
            "--linkage", str(golden / "link" / "linkage.json"),
            "--records", str(root / "e2e" / "records.csv"),
            "--crosswalk", str(root / "e2e" / "crosswalk.json"),
            "--schema", str(root / "schema" / "form_schema.json"),
            "--annotations", str(root / "e2e" / "annotations"),
            "--label", "Group",
            "--out", str(golden / "eval"),
        ]
    )
    assert rc == 0, f"evaluate exited {rc}"

    # manifests carry run ids and timings; keep goldens byte-comparable
    for manifest in golden.rglob("manifest.json"):
        manifest.unlink()

    # assemble the service state directory used by API and dashboard tests
    state = root / "service_state"
    if state.exists():
        shutil.rmtree(state)
    state.mkdir(parents=True)
    shutil.copy(root / "schema" / "form_schema.json", state / "schema.json")
    shutil.copy(root / "schema" / "grouping.json", state / "grouping.json")
    shutil.copytree(root / "e2e" / "articles", state / "articles")
    shutil.copytree(golden / "forms", state / "forms")
    shutil.copy(golden / "link" / "linkage.json", state / "linkage.json")
    shutil.copy(root / "e2e" / "records.csv", state / "records.csv")
    shutil.copy(root / "e2e" / "crosswalk.json", state / "crosswalk.json")
    shutil.copytree(root / "e2e" / "annotations", state / "annotations")
    (state / "tapes").mkdir()
    shutil.copy(root / "tapes" / "rerun.json", state / "tapes" / "rerun.json")
    (state / "config.json").write_text(
        dumps_document({"backend": "scripted:tapes/rerun.json"}), encoding="utf-8"
    )
    print(f"goldens written under {golden} and {state}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default=str(ROOT))
    parser.add_argument(
        "--goldens", action="store_true", help="also run the pipeline and freeze outputs"
    )
    args = parser.parse_args(argv)
    root = Path(args.root)
    write_inputs(root)
    if args.goldens:
        write_goldens(root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
