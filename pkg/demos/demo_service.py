"""The wire protocol: a scripted client session against a live service.

Starts the TCP service in-process, connects a client, and walks the
hello -> reset -> action loop -> done flow, including a dialogue oracle
query. Every line on the wire is one JSON message.
"""
import json

import numpy as np

from navbench.episodes import SceneContext, make_goal_episode_family, TASK_DIALOGUE
from navbench.generator import GeneratorParams, generate_scene
from navbench.service import ServiceState, WireClient, WireServer
from navbench.simulator import SimConfig


def show(tag, msg):
    compact = json.dumps(msg, sort_keys=True)
    if len(compact) > 110:
        compact = compact[:107] + "..."
    print(f"  {tag} {compact}")


def main():
    scene = generate_scene(GeneratorParams(), 77)
    ctx = SceneContext(scene)
    episode = make_goal_episode_family(ctx, "svc", np.random.default_rng(0))[TASK_DIALOGUE]
    state = ServiceState([scene], [episode], SimConfig(mode="telhop"))
    server = WireServer(state, "127.0.0.1", 0)
    server.serve_in_thread()
    host, port = server.address
    print(f"service listening on {host}:{port}")

    client = WireClient(host, port)
    try:
        show("->", {"kind": "hello"})
        show("<-", client.request("hello"))

        reply = client.request("reset", {"episode_id": episode.episode_id})
        header = reply["payload"]["episode"]
        print(f"\nreset: task={header['task_type']}, "
              f"instruction={header['instruction_bundle']['coarse']['natural']!r}")

        reply = client.request("oracle_query", {"text": "where is it and how far?"})
        print(f"oracle: {reply['payload']['text']!r} "
              f"(remaining {reply['payload']['hint']['geodesic_remaining']:.1f} m)")

        print("\nhopping along the reference path:")
        waypoints = episode.reference_path.waypoints[::40].tolist()
        waypoints.append(episode.reference_path.waypoints[-1].tolist())
        for wp in waypoints:
            reply = client.request("action", {"action": {"type": "hop", "target": wp}})
        reply = client.request("action", {"action": {"type": "discrete",
                                                     "primitive": "STOP"}})
        result = reply["payload"]["result"]
        print(f"done: reason={reply['payload']['reason']}, "
              f"SR={result['metrics']['SR']}, SPL={result['metrics']['SPL']:.3f}, "
              f"actions={result['num_actions']}")

        show("->", "this is not json")
        show("<-", client.send_raw("this is not json"))
    finally:
        client.close()
        server.shutdown()


if __name__ == "__main__":
    main()
