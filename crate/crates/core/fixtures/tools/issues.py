# Source texts for the bundled labeled backlog. Each inner list is a group of
# issues describing the same functionality; singletons are unique issues.
GROUPS = [
    [
        ("Login fails with HTTP 500 error", "Submitting the login form returns HTTP 500 and the user stays on the sign-in page."),
        ("Login form returns HTTP 500 error", "After submitting the login form the server returns HTTP 500 and the user cannot sign in."),
        ("Users cannot log in: HTTP 500 error on login", "The login form fails with an HTTP 500 server error when users submit valid credentials."),
        ("HTTP 500 error on login form submit", "Submitting valid credentials on the login form returns an HTTP 500 error page."),
        ("Sign-in broken, login returns 500", "Users are unable to sign in; the server returns error 500 after the login form is submitted."),
    ],
    [
        ("Password reset email is never sent", "Requesting a password reset shows a success message but no reset email arrives."),
        ("Password reset email not sent", "Users request a password reset but the reset email is never sent to their inbox."),
        ("No email received after password reset request", "After requesting a password reset, no password reset email is received."),
        ("Forgot password: reset email missing", "The forgot password flow never sends the password reset email."),
    ],
    [
        ("Add dark mode theme", "Provide a dark mode theme that users can toggle in their profile settings."),
        ("Support a dark theme", "Users want a dark theme option; add a dark mode toggle to profile settings."),
        ("Dark mode toggle in settings", "Add a toggle in profile settings to switch the site to a dark mode theme."),
        ("Implement dark mode", "Implement a dark mode theme for the whole site, selectable from settings."),
    ],
    [
        ("Checkout total rounds prices incorrectly", "The checkout total is off by one cent because prices are rounded per line item."),
        ("Checkout total off by one cent", "Order total at checkout is one cent off due to rounding of each line item price."),
        ("Rounding error in checkout total", "Line item prices are rounded individually, so the checkout total shows a rounding error."),
    ],
    [
        ("Search results pagination skips items", "Going to page 2 of the search results skips several products."),
        ("Search pagination skips products", "When paging through search results, some products on page 2 are skipped."),
        ("Products missing between search result pages", "Items disappear between search result pages because pagination skips products."),
    ],
    [
        ("Export orders to CSV", "Admins need to export the order list to a CSV file for accounting."),
        ("Export order list as CSV file", "Allow admins to export orders as a CSV file so accounting can import them."),
        ("CSV export for orders", "Add a CSV export of all orders to the admin order list page."),
    ],
    [
        ("Cart badge count does not update", "Adding a product to the cart does not update the cart badge count in the header."),
        ("Cart badge count not updating after add to cart", "The header cart badge count stays the same after a product is added to the cart."),
    ],
    [
        ("Product images load slowly", "Product images on the catalog page load slowly; serve resized thumbnails instead."),
        ("Slow loading product images on catalog page", "Catalog page product images are slow to load because full-size images are served."),
    ],
    [
        ("Newsletter unsubscribe link is broken", "The unsubscribe link in newsletter emails leads to a 404 page."),
        ("Unsubscribe link in newsletter returns 404", "Clicking the unsubscribe link in the newsletter email shows a 404 page."),
    ],
    [
        ("Add wishlist feature", "Let customers save products to a wishlist to buy later."),
        ("Wishlist for saving products", "Customers should be able to save products to a personal wishlist for later."),
    ],
    [
        ("Add two-factor authentication", "Support two-factor authentication with an authenticator app for customer accounts."),
        ("Two-factor authentication for accounts", "Customer accounts should support two-factor authentication using an authenticator app."),
    ],
    [
        ("Session expires too quickly", "Users are logged out after five minutes of inactivity; extend the session timeout."),
        ("Extend session timeout", "The session timeout of five minutes logs users out too quickly; extend it to thirty minutes."),
    ],
    [
        ("Invoice PDF shows wrong VAT rate", "Generated invoice PDFs show 20% VAT instead of the reduced book VAT rate."),
        ("Wrong VAT rate on invoice PDF", "The VAT rate printed on invoice PDFs is 20% but books use the reduced VAT rate."),
    ],
    [
        ("Mobile menu overlaps page content", "On small screens the mobile navigation menu overlaps the page content."),
        ("Navigation menu covers content on mobile", "The navigation menu covers the page content on mobile screens when opened."),
    ],
    [
        ("Inventory sync with warehouse fails nightly", "The nightly inventory sync job with the warehouse system fails with a timeout."),
        ("Nightly warehouse inventory sync times out", "The warehouse inventory sync that runs nightly times out and stock levels are stale."),
    ],
    [
        ("Rate limit the public API", "Add rate limiting to the public API to prevent abuse by scrapers."),
        ("Public API needs rate limiting", "Scrapers abuse the public API; introduce rate limiting per API key."),
    ],
]

SINGLETONS = [
    ("Upgrade database driver", "Move to the latest PostgreSQL driver release to get security fixes."),
    ("Write onboarding guide for new developers", "Document local setup, coding conventions and the release process."),
    ("Add gift card payment option", "Customers want to pay with store gift cards at checkout."),
    ("Show estimated delivery date", "Display an estimated delivery date on the product page based on stock location."),
    ("Translate storefront into German", "Add German translations for all storefront pages and emails."),
    ("Audit accessibility of product page", "Run an accessibility audit on the product page and fix contrast issues."),
    ("Set up staging environment", "Create a staging environment that mirrors production for release testing."),
    ("Customer reviews moderation queue", "Reviews with flagged words should go to a moderation queue before publishing."),
    ("Remove unused feature flags", "Clean up feature flags that have been fully rolled out for months."),
]
