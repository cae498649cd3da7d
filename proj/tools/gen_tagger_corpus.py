#!/usr/bin/env python3
"""Generate the bundled Penn-Treebank-tagged training corpus.

Sentences are produced from a small grammar of public-safety style messages
(headlines, passives, perfect/progressive/future clauses, imperatives,
questions, negation) over a hand-written lexicon. Tokenization matches the
C++ tokenizer: contractions are split ("do n't", "officer 's") and bracketed
generic terms are single tokens.

Usage: gen_tagger_corpus.py [--seed N] [--sentences N] > data/tagger/ptb-sample.txt
"""

import argparse
import random

DT_SG = ["the", "a", "this", "that", "every", "each", "no", "the", "the", "a"]
DT_PL = ["the", "these", "those", "all", "some", "no", "the"]
PRP_SUBJ_SG = ["he", "she", "it"]
PRP_SUBJ_PL = ["we", "they", "you"]
PRP_OBJ = ["him", "her", "them", "us", "me", "it", "you"]
PRPS = ["his", "her", "its", "our", "their", "your", "my"]
IN = ["in", "on", "at", "near", "from", "with", "for", "of", "about", "after", "before",
      "during", "into", "through", "over", "under", "around", "since", "until", "across", "behind"]
CC = ["and", "or", "but"]
MD = ["can", "could", "should", "may", "might", "must", "would"]
RB = ["also", "now", "still", "quickly", "safely", "currently", "recently", "very", "just",
      "always", "never", "soon", "already", "here", "there", "again", "immediately", "carefully",
      "slowly", "together", "tonight", "today"]

JJ = ["white", "black", "male", "female", "local", "safe", "severe", "heavy", "icy", "cold",
      "hot", "dangerous", "happy", "great", "proud", "new", "old", "young", "missing", "wanted",
      "armed", "elderly", "public", "national", "major", "minor", "serious", "stolen", "open",
      "clear", "busy", "wet", "slippery", "strong", "high", "low", "large", "small", "fatal",
      "recent", "annual", "free", "next", "last", "first", "second", "suspicious", "winter",
      "special", "wonderful", "dark", "blue", "red", "possible", "critical", "stable", "minor",
      "injured", "unknown", "local", "nearby", "hazardous", "extreme", "urgent", "daily"]
JJR = ["safer", "colder", "warmer", "higher", "lower", "larger", "smaller", "bigger", "better",
       "worse", "stronger", "heavier", "faster", "slower", "icier", "later"]
JJS = ["safest", "coldest", "highest", "largest", "biggest", "best", "worst", "strongest",
       "latest", "busiest"]

# singular, plural
NOUNS = [
    ("road", "roads"), ("street", "streets"), ("highway", "highways"), ("driver", "drivers"),
    ("officer", "officers"), ("suspect", "suspects"), ("vehicle", "vehicles"), ("car", "cars"),
    ("truck", "trucks"), ("storm", "storms"), ("warning", "warnings"), ("forecast", "forecasts"),
    ("community", "communities"), ("event", "events"), ("program", "programs"),
    ("department", "departments"), ("crash", "crashes"), ("accident", "accidents"),
    ("fire", "fires"), ("scene", "scenes"), ("area", "areas"), ("investigation", "investigations"),
    ("arrest", "arrests"), ("update", "updates"), ("tip", "tips"), ("burglary", "burglaries"),
    ("robbery", "robberies"), ("theft", "thefts"), ("shooting", "shootings"),
    ("injury", "injuries"), ("wreck", "wrecks"), ("victim", "victims"), ("man", "men"),
    ("woman", "women"), ("male", "males"), ("female", "females"), ("child", "children"),
    ("person", "people"), ("school", "schools"), ("park", "parks"), ("city", "cities"),
    ("county", "counties"), ("lane", "lanes"), ("intersection", "intersections"),
    ("flood", "floods"), ("resident", "residents"), ("citizen", "citizens"),
    ("family", "families"), ("neighbor", "neighbors"), ("volunteer", "volunteers"),
    ("student", "students"), ("item", "items"), ("business", "businesses"),
    ("witness", "witnesses"), ("report", "reports"), ("call", "calls"), ("alert", "alerts"),
    ("shelter", "shelters"), ("week", "weeks"), ("day", "days"), ("night", "nights"),
    ("house", "houses"), ("building", "buildings"), ("store", "stores"), ("bank", "banks"),
    ("office", "offices"), ("team", "teams"), ("chief", "chiefs"), ("sergeant", "sergeants"),
    ("deputy", "deputies"), ("detective", "detectives"), ("incident", "incidents"),
    ("case", "cases"), ("advisory", "advisories"), ("emergency", "emergencies"),
    ("neighborhood", "neighborhoods"), ("bridge", "bridges"), ("dog", "dogs"), ("gun", "guns"),
    ("handgun", "handguns"), ("weapon", "weapons"), ("road closure", None), ("hour", "hours"),
    ("minute", "minutes"), ("officer", "officers"), ("reminder", "reminders"),
    ("closure", "closures"), ("scam", "scams"), ("motel", "motels"), ("room", "rooms"),
    ("demonstration", "demonstrations"), ("couple", "couples"), ("beach", "beaches"),
    ("occupant", "occupants"), ("hospital", "hospitals"), ("condition", "conditions"),
]
MASS_NOUNS = ["weather", "traffic", "snow", "rain", "ice", "power", "water", "safety", "travel",
              "information", "help", "time", "home", "property", "damage", "assistance",
              "evidence", "custody", "congratulations"]
NNP = ["Main", "Street", "Avenue", "John", "Smith", "Chicago", "Denver", "Boston", "Florida",
       "Texas", "Broadway", "Central", "District", "County", "Police", "Department", "National",
       "Weather", "Service", "Christmas", "Halloween", "Thanksgiving", "Memorial", "Causeway",
       "Clearwater", "Fire", "Rescue", "Saint", "Paul", "Lexington", "Howard", "Hoffman", "Sgt",
       "Lt", "Officer", "Chief", "America", "Miller", "Garcia", "Johnson", "Oak", "Park",
       "[DayOfWeek]", "[Month]", "[Handle]"]
CD_WORDS = ["one", "two", "three", "four", "five", "ten", "[Number]", "[Number]", "[Number]"]

# base, 3sg, past, past participle, gerund
VERBS = [
    ("call", "calls", "called", "called", "calling"),
    ("report", "reports", "reported", "reported", "reporting"),
    ("arrest", "arrests", "arrested", "arrested", "arresting"),
    ("close", "closes", "closed", "closed", "closing"),
    ("open", "opens", "opened", "opened", "opening"),
    ("drive", "drives", "drove", "driven", "driving"),
    ("stay", "stays", "stayed", "stayed", "staying"),
    ("remain", "remains", "remained", "remained", "remaining"),
    ("avoid", "avoids", "avoided", "avoided", "avoiding"),
    ("help", "helps", "helped", "helped", "helping"),
    ("thank", "thanks", "thanked", "thanked", "thanking"),
    ("celebrate", "celebrates", "celebrated", "celebrated", "celebrating"),
    ("join", "joins", "joined", "joined", "joining"),
    ("congratulate", "congratulates", "congratulated", "congratulated", "congratulating"),
    ("investigate", "investigates", "investigated", "investigated", "investigating"),
    ("respond", "responds", "responded", "responded", "responding"),
    ("search", "searches", "searched", "searched", "searching"),
    ("find", "finds", "found", "found", "finding"),
    ("take", "takes", "took", "taken", "taking"),
    ("make", "makes", "made", "made", "making"),
    ("need", "needs", "needed", "needed", "needing"),
    ("ask", "asks", "asked", "asked", "asking"),
    ("keep", "keeps", "kept", "kept", "keeping"),
    ("check", "checks", "checked", "checked", "checking"),
    ("prepare", "prepares", "prepared", "prepared", "preparing"),
    ("expect", "expects", "expected", "expected", "expecting"),
    ("warn", "warns", "warned", "warned", "warning"),
    ("remind", "reminds", "reminded", "reminded", "reminding"),
    ("clear", "clears", "cleared", "cleared", "clearing"),
    ("block", "blocks", "blocked", "blocked", "blocking"),
    ("reopen", "reopens", "reopened", "reopened", "reopening"),
    ("injure", "injures", "injured", "injured", "injuring"),
    ("transport", "transports", "transported", "transported", "transporting"),
    ("recover", "recovers", "recovered", "recovered", "recovering"),
    ("locate", "locates", "located", "located", "locating"),
    ("identify", "identifies", "identified", "identified", "identifying"),
    ("release", "releases", "released", "released", "releasing"),
    ("charge", "charges", "charged", "charged", "charging"),
    ("seek", "seeks", "sought", "sought", "seeking"),
    ("flee", "flees", "fled", "fled", "fleeing"),
    ("steal", "steals", "stole", "stolen", "stealing"),
    ("break", "breaks", "broke", "broken", "breaking"),
    ("enter", "enters", "entered", "entered", "entering"),
    ("shoot", "shoots", "shot", "shot", "shooting"),
    ("rob", "robs", "robbed", "robbed", "robbing"),
    ("hit", "hits", "hit", "hit", "hitting"),
    ("stop", "stops", "stopped", "stopped", "stopping"),
    ("run", "runs", "ran", "run", "running"),
    ("go", "goes", "went", "gone", "going"),
    ("come", "comes", "came", "come", "coming"),
    ("see", "sees", "saw", "seen", "seeing"),
    ("know", "knows", "knew", "known", "knowing"),
    ("get", "gets", "got", "gotten", "getting"),
    ("give", "gives", "gave", "given", "giving"),
    ("send", "sends", "sent", "sent", "sending"),
    ("post", "posts", "posted", "posted", "posting"),
    ("share", "shares", "shared", "shared", "sharing"),
    ("visit", "visits", "visited", "visited", "visiting"),
    ("attend", "attends", "attended", "attended", "attending"),
    ("host", "hosts", "hosted", "hosted", "hosting"),
    ("enjoy", "enjoys", "enjoyed", "enjoyed", "enjoying"),
    ("welcome", "welcomes", "welcomed", "welcomed", "welcoming"),
    ("graduate", "graduates", "graduated", "graduated", "graduating"),
    ("serve", "serves", "served", "served", "serving"),
    ("protect", "protects", "protected", "protected", "protecting"),
    ("patrol", "patrols", "patrolled", "patrolled", "patrolling"),
    ("continue", "continues", "continued", "continued", "continuing"),
    ("complete", "completes", "completed", "completed", "completing"),
    ("do", "does", "did", "done", "doing"),
    ("say", "says", "said", "said", "saying"),
    ("tell", "tells", "told", "told", "telling"),
    ("work", "works", "worked", "worked", "working"),
    ("use", "uses", "used", "used", "using"),
    ("leave", "leaves", "left", "left", "leaving"),
    ("hold", "holds", "held", "held", "holding"),
    ("start", "starts", "started", "started", "starting"),
    ("plan", "plans", "planned", "planned", "planning"),
    ("watch", "watches", "watched", "watched", "watching"),
    ("follow", "follows", "followed", "followed", "following"),
    ("lock", "locks", "locked", "locked", "locking"),
    ("secure", "secures", "secured", "secured", "securing"),
    ("drop", "drops", "dropped", "dropped", "dropping"),
    ("disband", "disbands", "disbanded", "disbanded", "disbanding"),
    ("impact", "impacts", "impacted", "impacted", "impacting"),
    ("recover", "recovers", "recovered", "recovered", "recovering"),
    ("notice", "notices", "noticed", "noticed", "noticing"),
    ("alert", "alerts", "alerted", "alerted", "alerting"),
    ("escape", "escapes", "escaped", "escaped", "escaping"),
    ("occur", "occurs", "occurred", "occurred", "occurring"),
    ("perform", "performs", "performed", "performed", "performing"),
    ("bark", "barks", "barked", "barked", "barking"),
]
INTRANSITIVE = {"stay", "remain", "respond", "flee", "run", "go", "come", "graduate", "work",
                "disband", "escape", "occur", "bark", "continue"}


class Gen:
    def __init__(self, seed):
        self.r = random.Random(seed)

    def pick(self, xs):
        return self.r.choice(xs)

    def chance(self, p):
        return self.r.random() < p

    # --- noun phrases -------------------------------------------------
    def noun(self, plural):
        if not plural and self.chance(0.15):
            return [(self.pick(MASS_NOUNS), "NN")], False
        sg, pl = self.pick(NOUNS)
        if plural and pl:
            return [(pl, "NNS")], True
        return [(w, "NN") for w in sg.split()], False

    def adjectives(self):
        out = []
        if self.chance(0.35):
            out.append((self.pick(JJ), "JJ"))
            if self.chance(0.15):
                out.append((self.pick(JJ), "JJ"))
        return out

    def np(self, role="subj"):
        """Returns (tokens, plural)."""
        k = self.r.random()
        if k < 0.12:
            if role == "subj":
                if self.chance(0.5):
                    return [(self.pick(PRP_SUBJ_SG), "PRP")], False
                return [(self.pick(PRP_SUBJ_PL), "PRP")], True
            return [(self.pick(PRP_OBJ), "PRP")], False
        if k < 0.22:
            n = self.r.randint(1, 2)
            return [(self.pick(NNP), "NNP") for _ in range(n)], False
        if k < 0.30:
            toks, pl = self.noun(self.chance(0.4))
            return [(self.pick(PRPS), "PRP$")] + self.adjectives() + toks, pl
        if k < 0.36:
            return [(self.pick(CD_WORDS), "CD")] + self.adjectives() + self.noun(True)[0], True
        if k < 0.42:
            # possessive
            head, _ = self.noun(False)
            toks2, pl = self.noun(self.chance(0.3))
            return [("the", "DT")] + head + [("'s", "POS")] + toks2, pl
        plural = self.chance(0.35)
        toks, pl = self.noun(plural)
        if pl:
            det = [(self.pick(DT_PL), "DT")] if self.chance(0.7) else []
        else:
            if toks[0][0] in MASS_NOUNS:
                det = [("the", "DT")] if self.chance(0.5) else []
            else:
                d = self.pick(DT_SG)
                adjs = self.adjectives()
                first = (adjs + toks)[0][0]
                if d == "a" and first[0] in "aeiou":
                    d = "an"
                return [(d, "DT")] + adjs + toks, False
        return det + self.adjectives() + toks, pl

    def pp(self):
        prep = self.pick(IN)
        toks, _ = self.np("obj")
        return [(prep, "IN")] + toks

    def maybe_pp(self, p=0.5):
        out = []
        if self.chance(p):
            out += self.pp()
            if self.chance(0.2):
                out += self.pp()
        return out

    def obj(self, base):
        if base in INTRANSITIVE:
            return []
        return self.np("obj")[0]

    def adv(self, p=0.15):
        return [(self.pick(RB), "RB")] if self.chance(p) else []

    # --- clauses ------------------------------------------------------
    def clause(self):
        subj, pl = self.np("subj")
        v = self.pick(VERBS)
        base, s3, past, pp, ger = v
        form = self.r.random()
        third = not pl and subj[0][0] not in ("i", "you")
        if form < 0.18:  # simple past
            return subj + self.adv() + [(past, "VBD")] + self.obj(base) + self.maybe_pp()
        if form < 0.32:  # passive
            aux = ("were", "VBD") if pl else ("was", "VBD")
            if self.chance(0.3):
                aux = ("are", "VBP") if pl else ("is", "VBZ")
            by = [("by", "IN")] + self.np("obj")[0] if self.chance(0.25) else []
            return subj + [aux] + self.adv(0.1) + [(pp, "VBN")] + by + self.maybe_pp()
        if form < 0.44:  # present perfect / past perfect
            aux = self.pick([("has", "VBZ")] if third else [("have", "VBP")])
            if self.chance(0.25):
                aux = ("had", "VBD")
            if self.chance(0.15):
                return subj + [aux, ("been", "VBN"), (pp, "VBN")] + self.maybe_pp()
            return subj + [aux] + self.adv(0.1) + [(pp, "VBN")] + self.obj(base) + self.maybe_pp()
        if form < 0.56:  # progressive
            if self.chance(0.5):
                aux = ("is", "VBZ") if third else ("are", "VBP")
            else:
                aux = ("was", "VBD") if third else ("were", "VBD")
            if subj[0][0] == "i":
                aux = ("am", "VBP")
            return subj + [aux] + self.adv(0.1) + [(ger, "VBG")] + self.obj(base) + self.maybe_pp()
        if form < 0.68:  # future
            mod = ("will", "MD") if self.chance(0.9) else ("shall", "MD")
            if self.chance(0.35):
                return subj + [mod, ("be", "VB"), (ger, "VBG")] + self.obj(base) + self.maybe_pp()
            if self.chance(0.15):
                return subj + [mod, ("be", "VB"), (pp, "VBN")] + self.maybe_pp()
            return subj + [mod] + self.adv(0.1) + [(base, "VB")] + self.obj(base) + self.maybe_pp()
        if form < 0.76:  # modal
            return subj + [(self.pick(MD), "MD")] + self.adv(0.1) + [(base, "VB")] + self.obj(base) + self.maybe_pp()
        if form < 0.88:  # simple present
            verb = (s3, "VBZ") if third else (base, "VBP")
            return subj + self.adv(0.1) + [verb] + self.obj(base) + self.maybe_pp()
        if form < 0.94:  # negation
            if self.chance(0.5):
                aux = ("does", "VBZ") if third else ("do", "VBP")
            else:
                aux = ("did", "VBD")
            neg = ("n't", "RB") if self.chance(0.6) else ("not", "RB")
            return subj + [aux, neg, (base, "VB")] + self.obj(base) + self.maybe_pp()
        # copula + adjective
        cop = ("is", "VBZ") if third else ("are", "VBP")
        if self.chance(0.3):
            cop = ("was", "VBD") if third else ("were", "VBD")
        k = self.r.random()
        if k < 0.6:
            pred = [(self.pick(JJ), "JJ")]
        elif k < 0.8:
            pred = [(self.pick(JJR), "JJR"), ("than", "IN")] + self.np("obj")[0]
        else:
            pred = [("the", "DT"), (self.pick(JJS), "JJS")] + self.noun(False)[0]
        return subj + [cop] + self.adv(0.15) + pred + self.maybe_pp(0.3)

    def imperative(self):
        v = self.pick(VERBS)
        base = v[0]
        lead = []
        k = self.r.random()
        if k < 0.2:
            lead = [("please", "VB")] if self.chance(0.3) else [("please", "UH")]
        elif k < 0.35:
            lead = [("do", "VBP"), ("n't", "RB")]
        return lead + [(base, "VB")] + self.obj(base) + self.maybe_pp(0.6)

    def question(self):
        k = self.r.random()
        subj, pl = self.np("subj")
        v = self.pick(VERBS)
        base, _, _, pp, ger = v
        third = not pl
        if k < 0.3:
            aux = ("has", "VBZ") if third else ("have", "VBP")
            return [aux] + subj + [(pp, "VBN")] + self.obj(base) + self.maybe_pp(0.4)
        if k < 0.6:
            aux = ("does", "VBZ") if third else ("do", "VBP")
            if self.chance(0.3):
                aux = ("did", "VBD")
            return [aux] + subj + [(base, "VB")] + self.obj(base) + self.maybe_pp(0.4)
        if k < 0.8:
            wh = self.pick([("who", "WP"), ("what", "WP")])
            return [wh, (v[2], "VBD")] + self.obj(base) + self.maybe_pp(0.5)
        wh = self.pick([("where", "WRB"), ("when", "WRB"), ("how", "WRB"), ("why", "WRB")])
        aux = ("is", "VBZ") if third else ("are", "VBP")
        return [wh, aux] + subj + [(ger, "VBG")] + self.maybe_pp(0.4)

    def headline(self):
        k = self.r.random()
        if k < 0.3:
            toks = self.adjectives() + self.noun(False)[0]
            if self.chance(0.5):
                toks += self.noun(self.chance(0.4))[0]
            return toks + self.pp()
        if k < 0.5:
            first = self.pick([("UPDATE", "NN"), ("ALERT", "NN"), ("REMINDER", "NN"), ("WANTED", "JJ"),
                               ("ARREST", "NN"), ("Update", "NN"), ("Reminder", "NN"), ("Alert", "NN")])
            return [first, (":", ":")] + self.clause()
        if k < 0.65:
            return [("call", "VB"), (self.pick(["[Phone]", "[Number]"]), "CD"), ("or", "CC"),
                    ("visit", "VB"), ("[URL]", "NN")]
        if k < 0.8:
            return [("happy", "JJ"), (self.pick(["Christmas", "Halloween", "Thanksgiving", "[DayOfWeek]"]), "NNP"),
                    ("from", "IN")] + self.np("obj")[0]
        if k < 0.9:
            return [("there", "EX"), self.pick([("is", "VBZ"), ("was", "VBD")])] + self.np("obj")[0] + self.pp()
        return [("thank", "VBP"), ("you", "PRP"), ("to", "TO")] + self.np("obj")[0] + \
               [("for", "IN")] + self.np("obj")[0]

    def infinitive_clause(self):
        subj, pl = self.np("subj")
        v1 = self.pick([v for v in VERBS if v[0] in ("need", "ask", "plan", "continue", "start",
                                                     "remind", "expect", "want")] or VERBS)
        v2 = self.pick(VERBS)
        head = [(v1[2], "VBD")] if self.chance(0.5) else [(v1[1] if not pl else v1[0], "VBZ" if not pl else "VBP")]
        return subj + head + [("to", "TO"), (v2[0], "VB")] + self.obj(v2[0]) + self.maybe_pp(0.4)

    def sentence(self):
        k = self.r.random()
        if k < 0.45:
            toks = self.clause()
            if self.chance(0.15):
                toks += [(",", ","), (self.pick(CC), "CC")] + self.clause()
        elif k < 0.6:
            toks = self.imperative()
        elif k < 0.7:
            toks = self.question()
            toks.append(("?", "."))
            return self.finish(toks)
        elif k < 0.85:
            toks = self.headline()
        else:
            toks = self.infinitive_clause()
        if self.chance(0.1):
            term, tag = self.pick([("[URL]", "NN"), ("[Date]", "CD"), ("[DayOfWeek]", "NNP")])
            toks += [(self.pick(["at", "on"]), "IN"), (term, tag)]
        toks.append(self.pick([(".", "."), (".", "."), ("!", "."), (".", ".")]))
        return self.finish(toks)

    def finish(self, toks):
        w, t = toks[0]
        if w and w[0].islower() and self.chance(0.85):
            toks[0] = (w[0].upper() + w[1:], t)
        return " ".join(f"{w}/{t}" for w, t in toks)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20180901)
    ap.add_argument("--sentences", type=int, default=6000)
    args = ap.parse_args()
    g = Gen(args.seed)
    for _ in range(args.sentences):
        print(g.sentence())


if __name__ == "__main__":
    main()
