"""Exemplar programs exercised by the round-trip and acceptance suites."""

EXEMPLAR_PROGRAMS = [
    'SELECT member FROM w ORDER BY f("How long does it last?"; term) DESC LIMIT 1',
    "SELECT (SELECT COUNT(place) FROM w WHERE f(\"Is it in united kingdom?\"; place) = 'yes') = 8",
    "SELECT player FROM w WHERE f(\"Has crossed swords on its logo?\"; `signed from`) = 'yes'",
    "SELECT year FROM t WHERE win_team='kansas state' AND win_team - los_team > 10",
    'SELECT year FROM t WHERE win_team=\'kansas state\' AND f("Points?";win_team) - f("Points?";los_team) > 10',
    ("SELECT shirt FROM w WHERE f(\"North America?\"; made_in) = 'yes' "
     "AND f(\"No chemicals?\"; shirt) = 'yes' ORDER BY num_of_orders DESC LIMIT 1"),
    'SELECT f_col("North America?"; made_in) FROM w',
    'SELECT f_val("The most formal?"; shirt)',
    "SELECT * FROM w LIMIT 3;",
    "SELECT * FROM w;",
]
