import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api";

function fakeFetch(status: number, body: unknown): typeof fetch {
  return async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
}

describe("ApiClient", () => {
  it("parses schema responses", async () => {
    const client = new ApiClient(
      "",
      fakeFetch(200, { group_key: "p", columns: [] }),
    );
    expect(await client.schema()).toEqual({ group_key: "p", columns: [] });
  });

  it("sends the what-if request body unchanged", async () => {
    let captured: any;
    const fetchFn: typeof fetch = async (_url, init) => {
      captured = JSON.parse(String(init?.body));
      return new Response(JSON.stringify({ ok: true }), { status: 200 });
    };
    const client = new ApiClient("", fetchFn);
    await client.whatIf({ base_product: "A2", overrides: { g: "1" }, n: 100, seed: 7 });
    expect(captured).toEqual({ base_product: "A2", overrides: { g: "1" }, n: 100, seed: 7 });
  });

  it("surfaces the machine-readable field on validation errors", async () => {
    const client = new ApiClient(
      "",
      fakeFetch(400, { detail: { message: "n must be >= 1", field: "n" } }),
    );
    const err = await client
      .whatIf({ overrides: {}, n: 0 })
      .then(() => null)
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.field).toBe("n");
    expect(err.message).toContain("n must be >= 1");
  });

  it("handles string details", async () => {
    const client = new ApiClient("", fakeFetch(404, { detail: "not found" }));
    const err = await client.health().catch((e) => e);
    expect(err.message).toBe("not found");
    expect(err.field).toBeUndefined();
  });
});
